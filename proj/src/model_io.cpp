#include "gcnn/model_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gcnn/energy_terms.hpp"
#include "json.hpp"

namespace gcnn {

namespace {

using nlohmann::json;

json number_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

double number_from(const json& j, const char* what) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw std::runtime_error(std::string("model document: ") + what +
                                               " must be a number or null");
  return j.get<double>();
}

std::string format_short(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw std::runtime_error("format_short: conversion failed");
  return std::string(buf, ptr);
}

}  // namespace

ModelDocument make_document(const FitResult& fit, std::uint64_t seed,
                            const std::string& data_hash) {
  ModelDocument doc;
  doc.model = fit.model;
  for (int i = 0; i < kNumTerms; ++i) doc.active[i] = fit.model.w_mu[i] > 0.0;
  doc.provenance.alpha = fit.alpha;
  doc.provenance.seed = seed;
  doc.provenance.data_hash = data_hash;
  doc.provenance.train_nll = fit.train_nll;
  doc.provenance.dev_nll = fit.dev_nll;
  return doc;
}

std::string to_json(const ModelDocument& doc) {
  json j;
  j["schema_version"] = doc.schema_version;

  json terms = json::array();
  for (int i = 0; i < kNumTerms; ++i) {
    terms.push_back({{"name", term_name(i + 1)},
                     {"w_mu", doc.model.w_mu[i]},
                     {"w_star", doc.model.w_star[i]},
                     {"active", doc.active[i]}});
  }
  j["terms"] = std::move(terms);

  const CovarianceParam& cov = doc.model.covariance;
  json jd = json::array(), jr = json::array();
  const Mat14 r = realize_correlation(cov);
  for (int i = 0; i < kNumTerms; ++i) {
    jd.push_back(cov.mode == CovarianceMode::Deterministic ? 0.0 : cov.d[i]);
    json row = json::array();
    for (int k = 0; k < kNumTerms; ++k) row.push_back(r(i, k));
    jr.push_back(std::move(row));
  }
  j["covariance"] = {{"mode", covariance_mode_tag(cov.mode)}, {"d", std::move(jd)},
                     {"correlation", std::move(jr)}};

  j["provenance"] = {{"alpha", doc.provenance.alpha},
                     {"seed", doc.provenance.seed},
                     {"data_hash", doc.provenance.data_hash},
                     {"train_nll", number_or_null(doc.provenance.train_nll)},
                     {"dev_nll", number_or_null(doc.provenance.dev_nll)}};

  j["summary"] = summary_lines(doc);
  return j.dump(2) + "\n";
}

namespace {

ModelDocument document_from(const json& j) {
  ModelDocument doc;
  doc.schema_version = j.at("schema_version").get<std::string>();
  if (doc.schema_version != kModelSchemaVersion) {
    throw std::runtime_error("model document: unsupported schema_version '" +
                             doc.schema_version + "'");
  }

  const json& terms = j.at("terms");
  if (!terms.is_array() || terms.size() != kNumTerms) {
    throw std::runtime_error("model document: expected " + std::to_string(kNumTerms) +
                             " terms");
  }
  std::array<bool, kNumTerms> seen{};
  for (const json& t : terms) {
    const int i = term_index(t.at("name").get<std::string>()) - 1;
    if (seen[i]) {
      throw std::runtime_error("model document: duplicate term '" +
                               t.at("name").get<std::string>() + "'");
    }
    seen[i] = true;
    doc.model.w_mu[i] = t.at("w_mu").get<double>();
    doc.model.w_star[i] = t.at("w_star").get<double>();
    doc.active[i] = t.at("active").get<bool>();
    if (!(doc.model.w_mu[i] >= 0.0) || !(doc.model.w_star[i] >= 0.0)) {
      throw std::runtime_error("model document: weights must be non-negative");
    }
  }

  const json& jcov = j.at("covariance");
  CovarianceMode mode;
  try {
    mode = covariance_mode_from_tag(jcov.at("mode").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("model document: ") + e.what());
  }
  Vec14 d = Vec14::Zero();
  const json& jd = jcov.at("d");
  if (!jd.is_array() || jd.size() != kNumTerms) {
    throw std::runtime_error("model document: d must have one entry per term");
  }
  for (int i = 0; i < kNumTerms; ++i) d[i] = jd[i].get<double>();

  const json& jr = jcov.at("correlation");
  if (!jr.is_array() || jr.size() != kNumTerms) {
    throw std::runtime_error("model document: correlation must be a square matrix");
  }
  Mat14 r;
  for (int i = 0; i < kNumTerms; ++i) {
    if (!jr[i].is_array() || jr[i].size() != kNumTerms) {
      throw std::runtime_error("model document: correlation must be a square matrix");
    }
    for (int k = 0; k < kNumTerms; ++k) r(i, k) = jr[i][k].get<double>();
  }
  for (int i = 0; i < kNumTerms; ++i) {
    if (std::abs(r(i, i) - 1.0) > 1e-12) {
      throw std::runtime_error("model document: correlation diagonal must be 1");
    }
    for (int k = 0; k < kNumTerms; ++k) {
      if (std::abs(r(i, k)) > 1.0 + 1e-12 || std::abs(r(i, k) - r(k, i)) > 1e-12) {
        throw std::runtime_error("model document: correlation must be symmetric with "
                                 "entries in [-1, 1]");
      }
    }
  }

  switch (mode) {
    case CovarianceMode::Deterministic:
      doc.model.covariance = CovarianceParam::deterministic();
      break;
    case CovarianceMode::IndependentDiag:
      doc.model.covariance = CovarianceParam::independent(d);
      break;
    case CovarianceMode::CorrelatedFull:
      doc.model.covariance = CovarianceParam::correlated_pinned(d, r);
      break;
  }

  const json& jp = j.at("provenance");
  doc.provenance.alpha = jp.at("alpha").get<double>();
  doc.provenance.seed = jp.at("seed").get<std::uint64_t>();
  doc.provenance.data_hash = jp.at("data_hash").get<std::string>();
  doc.provenance.train_nll = number_from(jp.at("train_nll"), "train_nll");
  doc.provenance.dev_nll = number_from(jp.at("dev_nll"), "dev_nll");
  return doc;
}

}  // namespace

ModelDocument from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("model document: invalid JSON: ") + e.what());
  }
  try {
    return document_from(j);
  } catch (const json::exception& e) {
    // missing or mistyped fields surface uniformly as malformed documents
    throw std::runtime_error(std::string("model document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    // unknown term names, out-of-range covariance parameters
    throw std::runtime_error(std::string("model document: ") + e.what());
  }
}

void save_model(const ModelDocument& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << to_json(doc);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

ModelDocument load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string dataset_hash(const BiaxialDataset& data) {
  const std::string text = to_csv(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

std::vector<std::string> summary_lines(const ModelDocument& doc) {
  const auto& lib = term_library();
  std::vector<std::string> lines;
  for (int i = 0; i < kNumTerms; ++i) {
    if (!doc.active[i]) continue;
    const TermSpec& spec = lib[i];
    // Fiber-pair terms are already split half/half across the two families;
    // the other terms absorb the conventional 1/2 energy prefactor.
    const double a = (spec.invariant == InvariantKind::I4s ? 1.0 : 2.0) * doc.model.w_mu[i];
    std::string line = std::string(term_name(i + 1)) + ": ";
    if (spec.activation == Activation::Identity) {
      line += "mu = " + format_short(a) + " kPa";
    } else {
      line += "a = " + format_short(a) + " kPa, b = " + format_short(doc.model.w_star[i]);
    }
    if (doc.model.covariance.mode != CovarianceMode::Deterministic) {
      line += ", d = " + format_short(doc.model.covariance.d[i]);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace gcnn
