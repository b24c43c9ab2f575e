#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace racemode {

/// One row of the arc-length sampled reference line. Lateral quantities are
/// signed offsets along the left-pointing normal.
struct ReferenceSample {
  double s = 0.0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double kappa = 0.0;
  double n_min = 0.0;
  double n_max = 0.0;
  double n_raceline = 0.0;
  double v_raceline = 0.0;

  bool operator==(const ReferenceSample&) const = default;
};

struct CartesianPose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

struct FrenetPose {
  double s = 0.0;
  double n = 0.0;
  double mu = 0.0;
};

/// Reference quantities at an arbitrary arc length, plus the local slope of
/// the curvature (needed by the Frenet path-curvature composition).
struct ReferencePoint {
  ReferenceSample sample;
  double dkappa_ds = 0.0;
  double dx_ds = 0.0;
  double dy_ds = 0.0;
  double dpsi_ds = 0.0;
};

/// Immutable arc-length track model. Construction validates every invariant
/// and throws InvariantViolation naming the first one that fails.
class TrackDefinition {
 public:
  static constexpr double kMaxSpacing = 5.0;

  TrackDefinition(std::vector<ReferenceSample> samples, bool closed);

  const std::vector<ReferenceSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double lap_length() const { return lap_length_; }
  bool closed() const { return closed_; }
  double mean_spacing() const { return lap_length_ / static_cast<double>(closed_ ? size() : size() - 1); }

  /// Closed tracks: s mod lap_length. Open tracks: clamped to [0, lap_length].
  double wrap(double s) const;

  /// Linear interpolation of every reference quantity. Heading is unwrapped
  /// across the segment, so the returned psi is continuous but not wrapped.
  ReferencePoint at(double s) const;

  /// Largest n_max - n_min over all samples.
  double max_width() const { return max_width_; }
  /// Largest gap between consecutive samples, including the closing gap.
  double max_spacing() const { return max_spacing_; }

 private:
  std::size_t segment_index(double s_wrapped) const;

  std::vector<ReferenceSample> samples_;
  double lap_length_ = 0.0;
  bool closed_ = false;
  double max_width_ = 0.0;
  double max_spacing_ = 0.0;
};

// -- IO ---------------------------------------------------------------------

/// Reads `s,x,y,psi,kappa,n_min,n_max,n_raceline,v_raceline` CSV. Lines
/// starting with '#' are comments; `# closed: true|false` forces topology,
/// otherwise a track is closed when its end lies within one spacing limit of
/// its start.
TrackDefinition load_track(const std::filesystem::path& path);
TrackDefinition parse_track(const std::string& csv_text);
std::string format_track(const TrackDefinition& track);
void save_track(const TrackDefinition& track, const std::filesystem::path& path);

// -- Frenet transforms ------------------------------------------------------

CartesianPose frenet_to_cartesian(const TrackDefinition& track, double s, double n);

struct ProjectionHint {
  std::optional<double> s;    ///< previous arc length; enables local search
  std::optional<double> psi;  ///< vehicle heading; fills FrenetPose::mu
};

FrenetPose cartesian_to_frenet(const TrackDefinition& track, double x, double y,
                               const ProjectionHint& hint = {});

struct WrappedProgress {
  double s = 0.0;
  std::int64_t lap = 0;
};

WrappedProgress wrap_progress(const TrackDefinition& track, double s_raw);

// -- Geometry features -------------------------------------------------------

enum GeometryChannel : int {
  kChannelKappa = 0,
  kChannelDeltaPsi,
  kChannelNMin,
  kChannelNMax,
  kChannelNRaceline,
  kChannelVRaceline,
  kGeometryChannels
};

struct GeometryConfig {
  int n_lookahead = 30;
  double spacing = 10.0;
  bool operator==(const GeometryConfig&) const = default;
};

using GeometryFeatures = Eigen::Matrix<double, kGeometryChannels, Eigen::Dynamic>;

GeometryFeatures query_geometry(const TrackDefinition& track, double s, const GeometryConfig& config);

// -- Synthetic tracks ---------------------------------------------------------

/// Limits used to place the heuristic raceline and its speed profile.
struct RacelineParams {
  double v_max = 80.0;
  double ax_accel = 8.0;
  double ax_brake = 12.0;
  double ay = 12.0;
  double p = 2.0;
  double budget = 0.85;       ///< fraction of the acceleration limits the profile may use
  double lateral_use = 0.75;  ///< fraction of the half-width the out-in-out line may use
  double apex_sigma = 15.0;   ///< curvature smoothing length for the apex term [m]
  double entry_sigma = 60.0;  ///< curvature smoothing length for the outside term [m]
};

enum class TrackKind { oval, chicane, random_loop };

std::optional<TrackKind> track_kind_from_string(const std::string& name);
std::string to_string(TrackKind kind);

struct TrackParams {
  double straight = 200.0;
  double radius = 50.0;
  double width = 12.0;
  double edge_margin = 1.0;  ///< kept between the track edge and the allowed centre band
  double spacing = 2.0;
  double kappa_blend = 12.0;  ///< Gaussian width for curvature transitions [m], 0 keeps them sharp
  // random_loop only
  double mean_radius = 230.0;
  int harmonics = 5;
  double amplitude = 0.3;
  RacelineParams raceline;
};

/// A piece of constant-curvature centreline.
struct TrackSegment {
  double length = 0.0;
  double kappa = 0.0;
};

/// Samples a centreline made of constant-curvature segments at uniform arc
/// length and fits a raceline. The segments must close on themselves when
/// `closed` is set (checked to 1e-6 m).
TrackDefinition track_from_segments(const CartesianPose& start, const std::vector<TrackSegment>& segments,
                                    const TrackParams& params, bool closed);

TrackDefinition synth_track(TrackKind kind, const TrackParams& params, std::uint64_t seed);

/// Speed profile along the track's existing raceline for the given limits.
/// Curvature-limited, then forward/backward acceleration passes.
std::vector<double> raceline_speed_profile(const TrackDefinition& track, const RacelineParams& params);

/// Copy of `track` whose v_raceline column is replaced by `speeds`.
TrackDefinition with_raceline_speeds(const TrackDefinition& track, const std::vector<double>& speeds);

}  // namespace racemode
