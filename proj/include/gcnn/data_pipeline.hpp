#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gcnn/stress_model.hpp"

namespace gcnn {

/// The ten loading protocols: strip, equibiaxial and half-slope ("off")
/// stretch paths, run at both mountings. Names follow the rig convention:
/// w/s label the warp and transverse axes of the 0-90 mounting, x/y the
/// loading axes of the +-45 mounting.
enum class Experiment {
  StripW,
  StripS,
  OffW,
  OffS,
  Equibiax,
  StripX,
  StripY,
  OffX,
  OffY,
  EquibiaxOff
};

enum class Direction { Dir1, Dir2 };
enum class SplitTag { Train, Dev };

const char* experiment_tag(Experiment e);                 // "strip-w", "equibiax-off", ...
Experiment experiment_from_tag(std::string_view tag);     // throws for unknown tags
Orientation orientation_of(Experiment e);
const char* orientation_tag(Orientation o);               // "0-90" / "pm45"
Orientation orientation_from_tag(std::string_view tag);

/// Deformation state of an experiment at driven stretch t >= 1.
/// Strip paths hold the transverse stretch at 1, equibiaxial sets both to t,
/// off paths move the transverse axis at half slope: 1 + (t - 1)/2.
DeformationState protocol_state(Experiment e, double t);

/// Stress direction label within an experiment: "w"/"s" at 0-90, "x"/"y" at pm45.
const char* direction_label(Orientation o, Direction d);

/// Canonical curve id, e.g. "strip-w:s" (s stress of the strip-w experiment).
std::string curve_id(Experiment e, Direction d);

struct CurvePoint {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double stress = 0.0;  // [kPa]
  int sample = 1;
};

/// One measured stress component over one experiment, all samples pooled.
struct Curve {
  std::string id;
  Experiment experiment = Experiment::StripW;
  Orientation orientation = Orientation::Aligned0_90;
  Direction direction = Direction::Dir1;
  std::vector<CurvePoint> points;
};

/// Collection of curves plus the train/dev split assignment (default: all
/// curves train). Every (point, direction) pair is one scalar observation.
class BiaxialDataset {
 public:
  void add_curve(Curve curve);
  const std::vector<Curve>& curves() const { return curves_; }
  bool has_curve(const std::string& id) const;
  /// Throws std::invalid_argument listing the available ids.
  const Curve& curve(const std::string& id) const;

  void set_split(const std::string& id, SplitTag tag);
  SplitTag split_of(const std::string& id) const;

  std::size_t observation_count() const;
  std::size_t observation_count(SplitTag tag) const;
  /// Largest stretch in either axis over the given split (1 if empty).
  double max_stretch(SplitTag tag) const;

  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string message) { warnings_.push_back(std::move(message)); }

 private:
  std::vector<Curve> curves_;
  std::map<std::string, SplitTag> split_;
  std::vector<std::string> warnings_;
};

/// Reads the canonical CSV schema
///   experiment,orientation,direction,sample,lambda1,lambda2,stress_kpa
/// with '#' comment lines. Parse and domain errors carry the line number.
BiaxialDataset load_csv(const std::string& path);

/// Canonical text form (shortest round-trip number formatting); write_csv
/// emits exactly this, so write(load(f)) reproduces a canonical file byte
/// for byte.
std::string to_csv(const BiaxialDataset& data);
void write_csv(const BiaxialDataset& data, const std::string& path);

/// Marks the held-out development curves (strip-w s stress, equibiaxial
/// w stress, strip-x x stress) as Dev and everything else Train.
/// Throws if a dev curve is missing.
BiaxialDataset standard_split(BiaxialDataset data);

struct Protocol {
  Experiment experiment = Experiment::StripW;
  double lambda_max = 1.1;
};

/// The standard ten protocols (five stretch paths at each mounting).
std::vector<Protocol> standard_protocols(double lambda_max = 1.1);

/// Simulates testing: draws one weight vector per virtual sample (shared
/// across protocols) and evaluates deterministic stresses along each
/// protocol path on a uniform grid of n_points driven stretches in
/// (1, lambda_max]. Mirror-redundant curves (strip-y, off-y, the second
/// equibiax-off direction) are omitted, so the standard protocols yield the
/// canonical 15 unique curves.
BiaxialDataset synthesize(const GaussianModel& model, const std::vector<Protocol>& protocols,
                          int n_samples, int n_points, std::uint64_t seed);

}  // namespace gcnn
