#include <unistd.h>

#include <iostream>

#include "skillforge/cli.hpp"

int main(int argc, char** argv) {
  // Labeling prompts only make sense when a person is at the keyboard.
  std::istream* prompt_in = isatty(STDIN_FILENO) ? &std::cin : nullptr;
  return skillforge::cli::run(argc, argv, {std::cout, std::cerr, prompt_in});
}
