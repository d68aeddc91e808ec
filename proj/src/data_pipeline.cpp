#include "gcnn/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gcnn {

namespace {

constexpr double kTensionSlack = 1e-9;  // stretches may round just below 1

struct ExperimentInfo {
  Experiment experiment;
  const char* tag;
  Orientation orientation;
};

constexpr ExperimentInfo kExperiments[] = {
    {Experiment::StripW, "strip-w", Orientation::Aligned0_90},
    {Experiment::StripS, "strip-s", Orientation::Aligned0_90},
    {Experiment::OffW, "off-w", Orientation::Aligned0_90},
    {Experiment::OffS, "off-s", Orientation::Aligned0_90},
    {Experiment::Equibiax, "equibiax", Orientation::Aligned0_90},
    {Experiment::StripX, "strip-x", Orientation::Offset45},
    {Experiment::StripY, "strip-y", Orientation::Offset45},
    {Experiment::OffX, "off-x", Orientation::Offset45},
    {Experiment::OffY, "off-y", Orientation::Offset45},
    {Experiment::EquibiaxOff, "equibiax-off", Orientation::Offset45},
};

const ExperimentInfo& info_of(Experiment e) {
  for (const auto& info : kExperiments) {
    if (info.experiment == e) return info;
  }
  throw std::logic_error("unreachable experiment value");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view field, int line, const char* what) {
  const std::string_view t = trim(field);
  double value = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": cannot parse " + what +
                             " from '" + std::string(t) + "'");
  }
  if (!std::isfinite(value)) {
    throw std::runtime_error("line " + std::to_string(line) + ": non-finite " + what);
  }
  return value;
}

int parse_int(std::string_view field, int line, const char* what) {
  const std::string_view t = trim(field);
  int value = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": cannot parse " + what +
                             " from '" + std::string(t) + "'");
  }
  return value;
}

constexpr const char* kCsvHeader = "experiment,orientation,direction,sample,lambda1,lambda2,stress_kpa";

}  // namespace

const char* experiment_tag(Experiment e) { return info_of(e).tag; }

Experiment experiment_from_tag(std::string_view tag) {
  for (const auto& info : kExperiments) {
    if (tag == info.tag) return info.experiment;
  }
  throw std::invalid_argument("unknown experiment tag '" + std::string(tag) + "'");
}

Orientation orientation_of(Experiment e) { return info_of(e).orientation; }

const char* orientation_tag(Orientation o) {
  return o == Orientation::Aligned0_90 ? "0-90" : "pm45";
}

Orientation orientation_from_tag(std::string_view tag) {
  if (tag == "0-90") return Orientation::Aligned0_90;
  if (tag == "pm45") return Orientation::Offset45;
  throw std::invalid_argument("unknown orientation tag '" + std::string(tag) +
                              "' (expected 0-90 or pm45)");
}

DeformationState protocol_state(Experiment e, double t) {
  const Orientation o = orientation_of(e);
  const double half = 1.0 + 0.5 * (t - 1.0);
  switch (e) {
    case Experiment::StripW:
    case Experiment::StripX:
      return {t, 1.0, o};
    case Experiment::StripS:
    case Experiment::StripY:
      return {1.0, t, o};
    case Experiment::OffW:
    case Experiment::OffX:
      return {t, half, o};
    case Experiment::OffS:
    case Experiment::OffY:
      return {half, t, o};
    case Experiment::Equibiax:
    case Experiment::EquibiaxOff:
      return {t, t, o};
  }
  throw std::logic_error("unreachable experiment value");
}

const char* direction_label(Orientation o, Direction d) {
  if (o == Orientation::Aligned0_90) return d == Direction::Dir1 ? "w" : "s";
  return d == Direction::Dir1 ? "x" : "y";
}

std::string curve_id(Experiment e, Direction d) {
  return std::string(experiment_tag(e)) + ":" + direction_label(orientation_of(e), d);
}

void BiaxialDataset::add_curve(Curve curve) {
  if (curve.id.empty()) curve.id = curve_id(curve.experiment, curve.direction);
  if (has_curve(curve.id)) {
    throw std::invalid_argument("dataset already contains curve '" + curve.id + "'");
  }
  curves_.push_back(std::move(curve));
}

bool BiaxialDataset::has_curve(const std::string& id) const {
  return std::any_of(curves_.begin(), curves_.end(),
                     [&](const Curve& c) { return c.id == id; });
}

const Curve& BiaxialDataset::curve(const std::string& id) const {
  for (const Curve& c : curves_) {
    if (c.id == id) return c;
  }
  std::string available;
  for (const Curve& c : curves_) {
    if (!available.empty()) available += ", ";
    available += c.id;
  }
  throw std::invalid_argument("no curve '" + id + "' in dataset (available: " + available + ")");
}

void BiaxialDataset::set_split(const std::string& id, SplitTag tag) {
  curve(id);  // existence check
  split_[id] = tag;
}

SplitTag BiaxialDataset::split_of(const std::string& id) const {
  const auto it = split_.find(id);
  return it == split_.end() ? SplitTag::Train : it->second;
}

std::size_t BiaxialDataset::observation_count() const {
  std::size_t n = 0;
  for (const Curve& c : curves_) n += c.points.size();
  return n;
}

std::size_t BiaxialDataset::observation_count(SplitTag tag) const {
  std::size_t n = 0;
  for (const Curve& c : curves_) {
    if (split_of(c.id) == tag) n += c.points.size();
  }
  return n;
}

double BiaxialDataset::max_stretch(SplitTag tag) const {
  double m = 1.0;
  for (const Curve& c : curves_) {
    if (split_of(c.id) != tag) continue;
    for (const CurvePoint& p : c.points) {
      m = std::max({m, p.lambda1, p.lambda2});
    }
  }
  return m;
}

BiaxialDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");

  std::vector<Curve> curves;
  std::vector<std::string> warnings;
  std::map<std::string, std::size_t> curve_index;
  std::map<std::string, int> last_sample;
  std::map<std::string, bool> warned_order;

  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty() || row.front() == '#') continue;
    if (!saw_header) {
      if (row != kCsvHeader) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": expected header '" + std::string(kCsvHeader) + "'");
      }
      saw_header = true;
      continue;
    }

    std::array<std::string_view, 7> fields;
    std::size_t start = 0, count = 0;
    const std::string_view raw(line);
    for (std::size_t i = 0; i <= raw.size(); ++i) {
      if (i == raw.size() || raw[i] == ',') {
        if (count >= fields.size()) {
          throw std::runtime_error("line " + std::to_string(line_no) + ": too many fields");
        }
        fields[count++] = raw.substr(start, i - start);
        start = i + 1;
      }
    }
    if (count != fields.size()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected 7 fields, got " +
                               std::to_string(count));
    }

    Experiment experiment;
    try {
      experiment = experiment_from_tag(trim(fields[0]));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    Orientation orientation;
    try {
      orientation = orientation_from_tag(trim(fields[1]));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (orientation != orientation_of(experiment)) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": experiment '" +
                               std::string(experiment_tag(experiment)) +
                               "' belongs to orientation " +
                               orientation_tag(orientation_of(experiment)));
    }

    const int dir_num = parse_int(fields[2], line_no, "direction");
    if (dir_num != 1 && dir_num != 2) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": direction must be 1 or 2, got " + std::to_string(dir_num));
    }
    const Direction direction = dir_num == 1 ? Direction::Dir1 : Direction::Dir2;

    const int sample = parse_int(fields[3], line_no, "sample");
    if (sample < 1) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": sample ids start at 1");
    }

    CurvePoint point;
    point.lambda1 = parse_double(fields[4], line_no, "lambda1");
    point.lambda2 = parse_double(fields[5], line_no, "lambda2");
    point.stress = parse_double(fields[6], line_no, "stress_kpa");
    point.sample = sample;
    if (!(point.lambda1 > 0.0) || !(point.lambda2 > 0.0)) {
      throw std::domain_error("line " + std::to_string(line_no) +
                              ": stretches must be positive");
    }
    if (point.lambda1 < 1.0 - kTensionSlack || point.lambda2 < 1.0 - kTensionSlack) {
      throw std::domain_error("line " + std::to_string(line_no) +
                              ": stretch below 1 in a tension protocol");
    }

    const std::string id = curve_id(experiment, direction);
    auto it = curve_index.find(id);
    if (it == curve_index.end()) {
      Curve curve;
      curve.id = id;
      curve.experiment = experiment;
      curve.orientation = orientation;
      curve.direction = direction;
      curves.push_back(std::move(curve));
      it = curve_index.emplace(id, curves.size() - 1).first;
    }
    curves[it->second].points.push_back(point);

    auto& last = last_sample[id];
    if (point.sample < last && !warned_order[id]) {
      warnings.push_back("curve " + id + ": sample ids are not monotone (line " +
                         std::to_string(line_no) + ")");
      warned_order[id] = true;
    }
    last = std::max(last, point.sample);
  }

  BiaxialDataset data;
  for (Curve& c : curves) data.add_curve(std::move(c));
  for (std::string& w : warnings) data.add_warning(std::move(w));
  if (data.observation_count() == 0) {
    throw std::runtime_error("'" + path + "' contains no observations");
  }
  return data;
}

std::string to_csv(const BiaxialDataset& data) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const Curve& c : data.curves()) {
    for (const CurvePoint& p : c.points) {
      out += experiment_tag(c.experiment);
      out += ',';
      out += orientation_tag(c.orientation);
      out += ',';
      out += c.direction == Direction::Dir1 ? '1' : '2';
      out += ',';
      out += std::to_string(p.sample);
      out += ',';
      out += format_double(p.lambda1);
      out += ',';
      out += format_double(p.lambda2);
      out += ',';
      out += format_double(p.stress);
      out += '\n';
    }
  }
  return out;
}

void write_csv(const BiaxialDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << to_csv(data);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

BiaxialDataset standard_split(BiaxialDataset data) {
  const char* dev_curves[] = {"strip-w:s", "equibiax:w", "strip-x:x"};
  for (const Curve& c : data.curves()) data.set_split(c.id, SplitTag::Train);
  for (const char* id : dev_curves) {
    data.set_split(id, SplitTag::Dev);  // throws if the curve is missing
  }
  return data;
}

std::vector<Protocol> standard_protocols(double lambda_max) {
  std::vector<Protocol> out;
  for (const auto& info : kExperiments) out.push_back({info.experiment, lambda_max});
  return out;
}

namespace {

// Mirror-redundant curves are not emitted: at the +-45 mounting, swapping the
// loading axes maps the sample onto itself, so strip-y and off-y duplicate
// strip-x / off-x with directions exchanged, and both equibiax-off stresses
// coincide.
std::vector<Direction> emitted_directions(Experiment e) {
  switch (e) {
    case Experiment::StripY:
    case Experiment::OffY:
      return {};
    case Experiment::EquibiaxOff:
      return {Direction::Dir1};
    default:
      return {Direction::Dir1, Direction::Dir2};
  }
}

}  // namespace

BiaxialDataset synthesize(const GaussianModel& model, const std::vector<Protocol>& protocols,
                          int n_samples, int n_points, std::uint64_t seed) {
  if (n_samples < 1) {
    throw std::invalid_argument("synthesize: need at least one sample, got " +
                                std::to_string(n_samples));
  }
  if (n_points < 1) {
    throw std::invalid_argument("synthesize: need at least one point per curve");
  }

  const std::vector<Vec14> weights = sample_weights(model, n_samples, seed);

  BiaxialDataset data;
  for (const Protocol& protocol : protocols) {
    const std::vector<Direction> directions = emitted_directions(protocol.experiment);
    if (directions.empty()) continue;
    if (!(protocol.lambda_max > 1.0)) {
      throw std::invalid_argument("synthesize: protocol lambda_max must exceed 1");
    }

    // Stress basis along the path is sample-independent; evaluate once.
    std::vector<DeformationState> states(n_points);
    std::vector<Vec14> f(n_points), g(n_points);
    for (int j = 0; j < n_points; ++j) {
      const double t = 1.0 + (protocol.lambda_max - 1.0) * (j + 1) / n_points;
      states[j] = protocol_state(protocol.experiment, t);
      const auto evals = eval_library(invariants(states[j]), model.w_star);
      for (int i = 0; i < kNumTerms; ++i) {
        f[j][i] = evals[i].f;
        g[j][i] = evals[i].g;
      }
    }

    for (Direction direction : directions) {
      Curve curve;
      curve.id = curve_id(protocol.experiment, direction);
      curve.experiment = protocol.experiment;
      curve.orientation = orientation_of(protocol.experiment);
      curve.direction = direction;
      curve.points.reserve(static_cast<std::size_t>(n_samples) * n_points);
      for (int s = 0; s < n_samples; ++s) {
        for (int j = 0; j < n_points; ++j) {
          CurvePoint p;
          p.lambda1 = states[j].lambda1;
          p.lambda2 = states[j].lambda2;
          p.sample = s + 1;
          const Vec14& basis = direction == Direction::Dir1 ? f[j] : g[j];
          p.stress = weights[s].dot(basis);
          curve.points.push_back(p);
        }
      }
      data.add_curve(std::move(curve));
    }
  }
  return data;
}

}  // namespace gcnn
