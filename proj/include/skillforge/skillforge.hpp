#pragma once

#include "skillforge/corpus.hpp"
#include "skillforge/error.hpp"
#include "skillforge/evalharness.hpp"
#include "skillforge/extractor.hpp"
#include "skillforge/lexicon.hpp"
#include "skillforge/trainer.hpp"
#include "skillforge/vectorstore.hpp"

namespace skillforge {
inline constexpr const char* kVersion = "0.1.0";
}
