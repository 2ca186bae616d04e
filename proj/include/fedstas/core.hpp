#pragma once

// Shared domain types and the error taxonomy.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedstas {

// A caller broke a documented precondition.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A computation left the finite range (divergence, overflow).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration file / CLI problems; carries field and line context.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File I/O and format problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One labeled training example.
struct Example {
  std::vector<double> features;
  int label = 0;
};

// One client's training data; n_k = examples.size() >= 1.
struct LocalDataset {
  std::vector<Example> examples;
  int client_id = 0;

  std::size_t size() const { return examples.size(); }
};

}  // namespace fedstas
