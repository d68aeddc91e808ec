#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "gcnn/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Discovers stochastic hyperelastic material models from biaxial test data"};
  app.require_subcommand(1);
  const auto mode_check = CLI::IsMember({"det", "indep", "corr"});

  gcnn::FitArgs fit;
  std::vector<int> fit_epochs;
  CLI::App* cfit = app.add_subcommand("fit", "Fit one model and write a model document");
  cfit->add_option("--data", fit.data_path, "Training data CSV")->required();
  cfit->add_option("--mode", fit.mode, "Covariance mode")->check(mode_check);
  cfit->add_option("--alpha", fit.alpha, "Sparsity penalty weight");
  cfit->add_option("--seed", fit.seed, "RNG seed");
  cfit->add_option("--epochs", fit_epochs, "Epochs as <pretrain>,<regularized>")
      ->delimiter(',');
  cfit->add_option("--batch", fit.batch_size, "Observations per step");
  cfit->add_option("--lr", fit.learning_rate, "Learning rate");
  cfit->add_option("--out", fit.out_path, "Output model JSON path");
  cfit->add_flag("--verbose", fit.verbose, "Per-epoch progress on stderr");

  gcnn::SweepArgs sw;
  std::vector<int> sweep_epochs;
  CLI::App* csweep = app.add_subcommand("sweep", "Fit a grid of penalty weights and select");
  csweep->add_option("--data", sw.data_path, "Training data CSV")->required();
  csweep->add_option("--mode", sw.mode, "Covariance mode")->check(mode_check);
  csweep->add_option("--alphas", sw.alphas, "Comma-separated penalty weights")
      ->required()
      ->delimiter(',');
  csweep->add_option("--seed", sw.seed, "RNG seed");
  csweep->add_option("--epochs", sweep_epochs, "Epochs as <pretrain>,<regularized>")
      ->delimiter(',');
  csweep->add_option("--batch", sw.batch_size, "Observations per step");
  csweep->add_option("--lr", sw.learning_rate, "Learning rate");
  csweep->add_option("--out", sw.table_path, "Output sweep table CSV");
  csweep->add_option("--model-out", sw.model_out, "Write the selected model document here");
  csweep->add_flag("--verbose", sw.verbose, "Per-epoch progress on stderr");

  gcnn::ReportArgs rep;
  CLI::App* crep = app.add_subcommand("report", "Per-experiment prediction panels");
  crep->add_option("--model", rep.model_path, "Model document JSON")->required();
  crep->add_option("--data", rep.data_path, "Data CSV")->required();
  crep->add_option("--out-dir", rep.out_dir, "Output directory");
  crep->add_flag("--svg", rep.svg, "Also render SVG plots");

  gcnn::PredictArgs pred;
  CLI::App* cpred = app.add_subcommand("predict", "Stress distribution at one state");
  cpred->add_option("--model", pred.model_path, "Model document JSON")->required();
  cpred->add_option("--lambda1", pred.lambda1, "Stretch along axis 1")->required();
  cpred->add_option("--lambda2", pred.lambda2, "Stretch along axis 2")->required();
  cpred->add_option("--orientation", pred.orientation, "0-90 or pm45")
      ->check(CLI::IsMember({"0-90", "pm45"}));

  gcnn::SynthArgs synth;
  CLI::App* csynth = app.add_subcommand("synth", "Sample virtual specimens from a model");
  csynth->add_option("--model", synth.model_path, "Model document JSON")->required();
  csynth->add_option("--samples", synth.samples, "Virtual specimens");
  csynth->add_option("--points", synth.points, "Grid points per protocol");
  csynth->add_option("--stretch", synth.stretch, "Largest protocol stretch");
  csynth->add_option("--seed", synth.seed, "RNG seed");
  csynth->add_option("--out", synth.out_path, "Output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? gcnn::kExitOk : gcnn::kExitUsage;
  }

  const auto apply_epochs = [](const std::vector<int>& e, int& pre, int& reg,
                               const char* cmd) {
    if (e.empty()) return true;
    if (e.size() == 1) {
      pre = reg = e[0];
      return true;
    }
    if (e.size() == 2) {
      pre = e[0];
      reg = e[1];
      return true;
    }
    std::cerr << "error: " << cmd << " --epochs takes at most two values\n";
    return false;
  };

  if (cfit->parsed()) {
    if (!apply_epochs(fit_epochs, fit.epochs_pretrain, fit.epochs_regularized, "fit")) {
      return gcnn::kExitUsage;
    }
    return gcnn::cmd_fit(fit, std::cout, std::cerr);
  }
  if (csweep->parsed()) {
    if (!apply_epochs(sweep_epochs, sw.epochs_pretrain, sw.epochs_regularized, "sweep")) {
      return gcnn::kExitUsage;
    }
    return gcnn::cmd_sweep(sw, std::cout, std::cerr);
  }
  if (crep->parsed()) return gcnn::cmd_report(rep, std::cout, std::cerr);
  if (cpred->parsed()) return gcnn::cmd_predict(pred, std::cout, std::cerr);
  if (csynth->parsed()) return gcnn::cmd_synth(synth, std::cout, std::cerr);
  return gcnn::kExitUsage;
}
