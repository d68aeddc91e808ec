#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gcnn {

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // bad flags, missing files, bad data
inline constexpr int kExitNumerical = 2;  // divergence, overflow

// Returns `path` unchanged when it exists (or is absolute); otherwise, when
// GCNN_DATA_DIR is set, retries relative to that directory.
std::string resolve_data_path(const std::string& path);

struct FitArgs {
  std::string data_path;
  std::string mode = "indep";
  double alpha = 0.0;
  std::uint64_t seed = 0;
  int epochs_pretrain = 2000;
  int epochs_regularized = 2000;
  int batch_size = 1000;
  double learning_rate = 1e-3;
  std::string out_path = "model.json";
  bool verbose = false;  // per-epoch progress on the error stream
};

struct SweepArgs {
  std::string data_path;
  std::string mode = "indep";
  std::vector<double> alphas;
  std::uint64_t seed = 0;
  int epochs_pretrain = 2000;
  int epochs_regularized = 2000;
  int batch_size = 1000;
  double learning_rate = 1e-3;
  std::string table_path = "sweep.csv";
  std::string model_out;  // when non-empty, the selected model document
  bool verbose = false;
};

struct ReportArgs {
  std::string model_path;
  std::string data_path;
  std::string out_dir = "report";
  bool svg = false;
};

struct PredictArgs {
  std::string model_path;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::string orientation = "0-90";
};

struct SynthArgs {
  std::string model_path;
  int samples = 5;
  int points = 100;
  double stretch = 1.1;  // largest stretch of each protocol
  std::uint64_t seed = 0;
  std::string out_path = "synthetic.csv";
};

// Fits on the standard split and writes a model document; prints a one-row
// summary table (mode, alpha, #terms, NLLs, variance-floor usage).
int cmd_fit(const FitArgs& args, std::ostream& out, std::ostream& err);

// One fit per alpha with shared pretraining; writes the sweep table CSV with
// the selected row marked.
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);

// Writes one CSV per experiment panel (stretch, data mean/std, model
// mean/std for both stress directions), a metadata JSON with per-curve extra
// NLL, and optional SVG plots.
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);

// Prints mu11, mu22, std11, std22 in kPa at one deformation state.
int cmd_predict(const PredictArgs& args, std::ostream& out, std::ostream& err);

// Samples virtual specimens from a model document and writes them as CSV
// over the standard ten protocols.
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);

}  // namespace gcnn
