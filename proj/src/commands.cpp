#include "gcnn/commands.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "gcnn/data_pipeline.hpp"
#include "gcnn/model_io.hpp"
#include "gcnn/objective.hpp"
#include "gcnn/stress_model.hpp"
#include "gcnn/trainer.hpp"
#include "json.hpp"

namespace gcnn {

namespace {

namespace fs = std::filesystem;

std::string fmt(double x) {
  if (!std::isfinite(x)) return "nan";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

std::string fmt_fixed(double x, int precision) {
  if (!std::isfinite(x)) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << x;
  return s.str();
}

template <typename F>
int run_guarded(std::ostream& err, F&& body) {
  try {
    std::forward<F>(body)();
    return kExitOk;
  } catch (const TrainingDivergence& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::overflow_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

std::string require_file(const std::string& path, const char* what) {
  const std::string resolved = resolve_data_path(path);
  if (!fs::exists(resolved)) {
    throw std::runtime_error(std::string("no such ") + what + " file: " + path);
  }
  return resolved;
}

TrainConfig base_config(const std::string& mode, double alpha, std::uint64_t seed,
                        int epochs_pretrain, int epochs_regularized, int batch_size,
                        double learning_rate) {
  TrainConfig cfg;
  cfg.mode = covariance_mode_from_tag(mode);
  cfg.alpha = alpha;
  cfg.seed = seed;
  cfg.epochs_pretrain = epochs_pretrain;
  cfg.epochs_regularized = epochs_regularized;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  return cfg;
}

void print_result_header(std::ostream& out) {
  out << "mode      alpha   terms  train_nll  dev_nll  var_floor\n";
}

void print_result_row(std::ostream& out, CovarianceMode mode, const FitResult& r,
                      double floor_frac, bool selected) {
  out << std::left << std::setw(8) << covariance_mode_tag(mode) << std::right << "  "
      << std::setw(5) << fmt_fixed(r.alpha, 2) << "  " << std::setw(5) << r.n_active_terms
      << "  " << std::setw(9) << fmt_fixed(r.train_nll, 3) << "  " << std::setw(7)
      << fmt_fixed(r.dev_nll, 3) << "  " << std::setw(9) << fmt_fixed(floor_frac, 4)
      << (selected ? "  *" : "") << '\n';
}

// ---- report ---------------------------------------------------------------

// The mirror-redundant panels are rebuilt from their measured twins: the
// +-45 mounting is symmetric under swapping the loading axes, which also
// swaps the two stress directions.
struct PanelDef {
  Experiment panel;
  Experiment source;
  bool swap = false;   // swap directions and mirror the deformation state
  bool copy2 = false;  // second direction duplicates the first (equibiaxial)
};

constexpr std::array<PanelDef, 10> kPanels{{
    {Experiment::StripW, Experiment::StripW},
    {Experiment::StripS, Experiment::StripS},
    {Experiment::OffW, Experiment::OffW},
    {Experiment::OffS, Experiment::OffS},
    {Experiment::Equibiax, Experiment::Equibiax},
    {Experiment::StripX, Experiment::StripX},
    {Experiment::StripY, Experiment::StripX, true},
    {Experiment::OffX, Experiment::OffX},
    {Experiment::OffY, Experiment::OffX, true},
    {Experiment::EquibiaxOff, Experiment::EquibiaxOff, false, true},
}};

struct PanelRow {
  double t = 1.0;
  DeformationState state;
  std::array<bool, 2> has_data{};
  std::array<double, 2> data_mean{}, data_std{};
  std::array<double, 2> model_mean{}, model_std{};
};

struct PanelData {
  std::vector<PanelRow> rows;
  std::array<std::string, 2> source_curve;  // empty when absent
};

PanelData build_panel(const PanelDef& def, const BiaxialDataset& data,
                      const GaussianModel& model) {
  struct Stats {
    double n = 0.0, s1 = 0.0, s2 = 0.0;
  };
  struct Acc {
    DeformationState state;
    std::array<Stats, 2> dirs;
  };
  std::map<double, Acc> acc;

  PanelData panel;
  const Orientation orientation = orientation_of(def.panel);
  for (const Direction sd : {Direction::Dir1, Direction::Dir2}) {
    const std::string id = curve_id(def.source, sd);
    if (!data.has_curve(id)) continue;
    const int source_index = sd == Direction::Dir1 ? 0 : 1;
    int panel_index = def.swap ? 1 - source_index : source_index;
    panel.source_curve[panel_index] = id;
    if (def.copy2 && source_index == 0) panel.source_curve[1] = id;

    for (const CurvePoint& p : data.curve(id).points) {
      const double t = std::max(p.lambda1, p.lambda2);
      Acc& a = acc[t];
      a.state = def.swap ? DeformationState{p.lambda2, p.lambda1, orientation}
                         : DeformationState{p.lambda1, p.lambda2, orientation};
      auto add = [&](int idx) {
        Stats& st = a.dirs[idx];
        st.n += 1.0;
        st.s1 += p.stress;
        st.s2 += p.stress * p.stress;
      };
      add(panel_index);
      if (def.copy2 && source_index == 0) add(1);
    }
  }

  for (const auto& [t, a] : acc) {
    PanelRow row;
    row.t = t;
    row.state = a.state;
    const StressDistribution pred = predict(model, a.state);
    row.model_mean = {pred.mu11, pred.mu22};
    row.model_std = {std::sqrt(std::max(0.0, pred.var11)),
                     std::sqrt(std::max(0.0, pred.var22))};
    for (int d = 0; d < 2; ++d) {
      const auto& st = a.dirs[d];
      if (st.n > 0.0) {
        row.has_data[d] = true;
        const double mean = st.s1 / st.n;
        row.data_mean[d] = mean;
        row.data_std[d] = std::sqrt(std::max(0.0, st.s2 / st.n - mean * mean));
      }
    }
    panel.rows.push_back(row);
  }
  return panel;
}

void write_panel_csv(const std::string& path, const PanelData& panel, const char* lbl1,
                     const char* lbl2) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "stretch,data_mean_" << lbl1 << ",data_std_" << lbl1 << ",model_mean_" << lbl1
      << ",model_std_" << lbl1 << ",data_mean_" << lbl2 << ",data_std_" << lbl2
      << ",model_mean_" << lbl2 << ",model_std_" << lbl2 << '\n';
  for (const PanelRow& r : panel.rows) {
    out << fmt(r.t);
    for (int d = 0; d < 2; ++d) {
      if (r.has_data[d]) {
        out << ',' << fmt(r.data_mean[d]) << ',' << fmt(r.data_std[d]);
      } else {
        out << ",,";
      }
      out << ',' << fmt(r.model_mean[d]) << ',' << fmt(r.model_std[d]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void write_panel_svg(const std::string& path, const std::string& title,
                     const PanelData& panel, const char* lbl1, const char* lbl2) {
  constexpr double kW = 640, kH = 480, kL = 70, kR = 20, kT = 40, kB = 50;
  constexpr const char* kColor[2] = {"#1f77b4", "#d62728"};

  double tmin = panel.rows.empty() ? 1.0 : panel.rows.front().t;
  double tmax = tmin;
  double ymin = 0.0, ymax = 0.0;
  for (const PanelRow& r : panel.rows) {
    tmin = std::min(tmin, r.t);
    tmax = std::max(tmax, r.t);
    for (int d = 0; d < 2; ++d) {
      ymin = std::min(ymin, r.model_mean[d] - 2.0 * r.model_std[d]);
      ymax = std::max(ymax, r.model_mean[d] + 2.0 * r.model_std[d]);
      if (r.has_data[d]) {
        ymin = std::min(ymin, r.data_mean[d] - r.data_std[d]);
        ymax = std::max(ymax, r.data_mean[d] + r.data_std[d]);
      }
    }
  }
  if (tmax == tmin) tmax = tmin + 1e-3;
  const double pad = 0.05 * std::max(1e-12, ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const auto px = [&](double t) { return kL + (t - tmin) / (tmax - tmin) * (kW - kL - kR); };
  const auto py = [&](double y) {
    return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kT - kB);
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << title << "</text>\n";

  // axes and ticks
  out << "<g stroke=\"#333\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
      << kH - kB << "\"/>\n";
  out << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
      << "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = tmin + (tmax - tmin) * i / 4.0;
    const double y = ymin + (ymax - ymin) * i / 4.0;
    out << "<line x1=\"" << px(t) << "\" y1=\"" << kH - kB << "\" x2=\"" << px(t) << "\" y2=\""
        << kH - kB + 5 << "\"/>\n"
        << "<text x=\"" << px(t) << "\" y=\"" << kH - kB + 18
        << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">" << tick_label(t)
        << "</text>\n";
    out << "<line x1=\"" << kL - 5 << "\" y1=\"" << py(y) << "\" x2=\"" << kL << "\" y2=\""
        << py(y) << "\"/>\n"
        << "<text x=\"" << kL - 8 << "\" y=\"" << py(y) + 4
        << "\" text-anchor=\"end\" stroke=\"none\" fill=\"#333\">" << tick_label(y)
        << "</text>\n";
  }
  out << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">stretch</text>\n";
  out << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2
      << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\" transform=\"rotate(-90 16 "
      << (kT + kH - kB) / 2 << ")\">stress [kPa]</text>\n";
  out << "</g>\n";

  const char* labels[2] = {lbl1, lbl2};
  for (int d = 0; d < 2; ++d) {
    // two-sigma model band
    out << "<polygon fill=\"" << kColor[d] << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const PanelRow& r : panel.rows) {
      out << px(r.t) << ',' << py(r.model_mean[d] + 2.0 * r.model_std[d]) << ' ';
    }
    for (auto it = panel.rows.rbegin(); it != panel.rows.rend(); ++it) {
      out << px(it->t) << ',' << py(it->model_mean[d] - 2.0 * it->model_std[d]) << ' ';
    }
    out << "\"/>\n";
    // model mean
    out << "<polyline fill=\"none\" stroke=\"" << kColor[d] << "\" stroke-width=\"2\" points=\"";
    for (const PanelRow& r : panel.rows) out << px(r.t) << ',' << py(r.model_mean[d]) << ' ';
    out << "\"/>\n";
    // data mean with one-sigma error bars
    out << "<g stroke=\"" << kColor[d] << "\" fill=\"" << kColor[d] << "\">\n";
    for (const PanelRow& r : panel.rows) {
      if (!r.has_data[d]) continue;
      out << "<line x1=\"" << px(r.t) << "\" y1=\"" << py(r.data_mean[d] - r.data_std[d])
          << "\" x2=\"" << px(r.t) << "\" y2=\"" << py(r.data_mean[d] + r.data_std[d])
          << "\"/>\n";
      out << "<circle cx=\"" << px(r.t) << "\" cy=\"" << py(r.data_mean[d]) << "\" r=\"2.5\"/>\n";
    }
    out << "</g>\n";
    out << "<text x=\"" << kL + 12 << "\" y=\"" << kT + 16 + 16 * d << "\" fill=\"" << kColor[d]
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << labels[d] << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace

std::string resolve_data_path(const std::string& path) {
  if (path.empty() || fs::exists(path) || fs::path(path).is_absolute()) return path;
  const char* dir = std::getenv("GCNN_DATA_DIR");
  if (dir == nullptr || *dir == '\0') return path;
  const fs::path candidate = fs::path(dir) / path;
  if (fs::exists(candidate)) return candidate.string();
  return path;
}

int cmd_fit(const FitArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const std::string path = require_file(args.data_path, "data");
    const BiaxialDataset data = standard_split(load_csv(path));
    for (const std::string& w : data.warnings()) err << "warning: " << w << '\n';

    const TrainConfig cfg =
        base_config(args.mode, args.alpha, args.seed, args.epochs_pretrain,
                    args.epochs_regularized, args.batch_size, args.learning_rate);
    const FitResult result = fit(cfg, data, {}, args.verbose ? &err : nullptr);

    LossEvaluator eval(data);
    const double floor_frac = eval.floor_fraction(result.model, Split::All);
    print_result_header(out);
    print_result_row(out, cfg.mode, result, floor_frac, false);

    const ModelDocument doc = make_document(result, args.seed, dataset_hash(data));
    for (const std::string& line : summary_lines(doc)) out << "  " << line << '\n';
    save_model(doc, args.out_path);
    out << "model written to " << args.out_path << '\n';
  });
}

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    if (args.alphas.empty()) throw std::runtime_error("sweep: no alphas given");
    const std::string path = require_file(args.data_path, "data");
    const BiaxialDataset data = standard_split(load_csv(path));
    for (const std::string& w : data.warnings()) err << "warning: " << w << '\n';

    const TrainConfig cfg = base_config(args.mode, 0.0, args.seed, args.epochs_pretrain,
                                        args.epochs_regularized, args.batch_size,
                                        args.learning_rate);
    const std::vector<FitResult> results =
        sweep(args.alphas, cfg, data, {}, args.verbose ? &err : nullptr);
    const FitResult& chosen = select(results);

    LossEvaluator eval(data);
    std::ofstream table(args.table_path);
    if (!table) throw std::runtime_error("cannot open '" + args.table_path + "' for writing");
    table << "mode,alpha,n_terms,train_nll,dev_nll,selected\n";
    print_result_header(out);
    for (const FitResult& r : results) {
      const bool selected = &r == &chosen;
      table << covariance_mode_tag(cfg.mode) << ',' << fmt(r.alpha) << ',' << r.n_active_terms
            << ',' << fmt(r.train_nll) << ',' << fmt(r.dev_nll) << ',' << (selected ? 1 : 0)
            << '\n';
      print_result_row(out, cfg.mode, r, eval.floor_fraction(r.model, Split::All), selected);
    }
    if (!table) throw std::runtime_error("failed writing '" + args.table_path + "'");
    out << "sweep table written to " << args.table_path << '\n';

    if (!args.model_out.empty()) {
      ModelDocument doc = make_document(chosen, args.seed, dataset_hash(data));
      save_model(doc, args.model_out);
      out << "selected model written to " << args.model_out << '\n';
    }
  });
}

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const ModelDocument doc = load_model(require_file(args.model_path, "model"));
    const BiaxialDataset data = load_csv(require_file(args.data_path, "data"));
    for (const std::string& w : data.warnings()) err << "warning: " << w << '\n';
    fs::create_directories(args.out_dir);

    LossEvaluator eval(data);
    nlohmann::json meta;
    meta["model"] = args.model_path;
    meta["data"] = args.data_path;
    meta["data_hash"] = dataset_hash(data);
    meta["panels"] = nlohmann::json::array();
    nlohmann::json skipped = nlohmann::json::array();

    for (const PanelDef& def : kPanels) {
      const PanelData panel = build_panel(def, data, doc.model);
      const char* tag = experiment_tag(def.panel);
      if (panel.rows.empty()) {
        skipped.push_back(tag);
        continue;
      }
      const Orientation orientation = orientation_of(def.panel);
      const char* lbl1 = direction_label(orientation, Direction::Dir1);
      const char* lbl2 = direction_label(orientation, Direction::Dir2);

      const std::string csv_name = std::string(tag) + ".csv";
      write_panel_csv((fs::path(args.out_dir) / csv_name).string(), panel, lbl1, lbl2);

      nlohmann::json jpanel;
      jpanel["panel"] = tag;
      jpanel["csv"] = csv_name;
      if (args.svg) {
        const std::string svg_name = std::string(tag) + ".svg";
        write_panel_svg((fs::path(args.out_dir) / svg_name).string(), tag, panel, lbl1, lbl2);
        jpanel["svg"] = svg_name;
      }
      jpanel["directions"] = nlohmann::json::array();
      const char* labels[2] = {lbl1, lbl2};
      for (int d = 0; d < 2; ++d) {
        if (panel.source_curve[d].empty()) continue;
        int floored = 0;
        const double extra = eval.extra_nll(doc.model, panel.source_curve[d], &floored);
        jpanel["directions"].push_back({{"direction", labels[d]},
                                        {"source_curve", panel.source_curve[d]},
                                        {"extra_nll", extra},
                                        {"floored_points", floored}});
      }
      meta["panels"].push_back(std::move(jpanel));
      out << "panel " << tag << " -> " << csv_name << '\n';
    }
    meta["skipped"] = std::move(skipped);

    const std::string meta_path = (fs::path(args.out_dir) / "meta.json").string();
    std::ofstream mf(meta_path);
    if (!mf) throw std::runtime_error("cannot open '" + meta_path + "' for writing");
    mf << meta.dump(2) << '\n';
    if (!mf) throw std::runtime_error("failed writing '" + meta_path + "'");
    out << "metadata written to " << meta_path << '\n';
  });
}

int cmd_predict(const PredictArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const ModelDocument doc = load_model(require_file(args.model_path, "model"));
    const DeformationState state{args.lambda1, args.lambda2,
                                 orientation_from_tag(args.orientation)};
    const StressDistribution p = predict(doc.model, state);
    out << "mu11 " << fmt(p.mu11) << '\n'
        << "mu22 " << fmt(p.mu22) << '\n'
        << "std11 " << fmt(std::sqrt(std::max(0.0, p.var11))) << '\n'
        << "std22 " << fmt(std::sqrt(std::max(0.0, p.var22))) << '\n';
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const ModelDocument doc = load_model(require_file(args.model_path, "model"));
    if (args.stretch <= 1.0) throw std::runtime_error("synth: --stretch must be > 1");
    const BiaxialDataset data = synthesize(doc.model, standard_protocols(args.stretch),
                                           args.samples, args.points, args.seed);
    write_csv(data, args.out_path);
    out << "wrote " << data.observation_count() << " observations over "
        << data.curves().size() << " curves to " << args.out_path << '\n';
  });
}

}  // namespace gcnn
