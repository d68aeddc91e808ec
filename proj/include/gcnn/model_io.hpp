#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gcnn/data_pipeline.hpp"
#include "gcnn/stress_model.hpp"
#include "gcnn/trainer.hpp"

namespace gcnn {

inline constexpr const char* kModelSchemaVersion = "1";

struct Provenance {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string data_hash;
  double train_nll = 0.0;
  double dev_nll = 0.0;
};

// On-disk model: term weights plus covariance stored as (d, correlation
// matrix) rather than Cholesky rows. Loading pins the stored correlation so
// a round trip reproduces predictions bitwise.
struct ModelDocument {
  std::string schema_version = kModelSchemaVersion;
  GaussianModel model;
  std::array<bool, kNumTerms> active{};
  Provenance provenance;
};

ModelDocument make_document(const FitResult& fit, std::uint64_t seed,
                            const std::string& data_hash);

std::string to_json(const ModelDocument& doc);
ModelDocument from_json(const std::string& text);

void save_model(const ModelDocument& doc, const std::string& path);
ModelDocument load_model(const std::string& path);

// FNV-1a 64 over the canonical CSV text, as 16 hex digits.
std::string dataset_hash(const BiaxialDataset& data);

// One line per active term with parameters in conventional (a, b) / (mu)
// form: a folds in the 1/2 energy prefactor of single-invariant terms, the
// symmetrized fiber-pair terms report their weight directly.
std::vector<std::string> summary_lines(const ModelDocument& doc);

}  // namespace gcnn
