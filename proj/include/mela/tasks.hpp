#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mela/dataset.hpp"
#include "mela/rng.hpp"

namespace mela::tasks {

// ------------------------------------------------------------------ sinusoid

// y = amp * sin(x + phase); amp ~ U[0.1, 5.0], phase ~ U[0, pi].
struct SinusoidParams {
  double amp = 1.0;
  double phase = 0.0;
  double value(double x) const { return amp * std::sin(x + phase); }
};

// 10 train + 10 test inputs from U[-5, 5] (train rows first). hidden = {amp,
// phase}. `seed` is recorded on the dataset for replay; the rng must be the
// stream that seed denotes.
TaskDataset gen_sinusoid_dataset(Rng& rng, std::uint64_t id = 0);

// -------------------------------------------------------------- room geometry

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

inline constexpr double kBallRadius = 0.075;
inline constexpr double kSampleSpacing = 0.1;

// Convex quadrilateral inside the unit square. Corners are counter-clockwise
// and canonically rotated so corners[0] has the smallest (y, then x); that
// fixed order makes the flattened corner list comparable across rooms.
struct PolygonRoom {
  std::array<Vec2, 4> corners;

  // Inward unit normal of edge i (corners[i] -> corners[i+1 mod 4]).
  Vec2 inward_normal(std::size_t i) const;
  // Signed distance of p to edge line i, positive inside.
  double edge_distance(Vec2 p, std::size_t i) const;
  // Radius of the largest inscribed circle.
  double inradius() const;
  double area() const;
  // True iff a disc of `radius` centered at p fits inside, within slack.
  bool contains_disc(Vec2 p, double radius, double slack = 0.0) const;
  // Contract checks: strict convexity, unit-square bounds, CCW canonical
  // start, inradius above the ball radius.
  void validate() const;

  std::array<double, 8> flat_corners() const;
};

// All consecutive-edge cross products strictly positive (CCW convex).
bool strictly_convex(const std::array<Vec2, 4>& corners);

// Rejection sampling: 4 uniform points in the unit square, ordered by angle
// about their centroid, accepted iff strictly convex with inradius above the
// ball radius. Throws generator_error after 10000 rejections.
PolygonRoom gen_room(Rng& rng);

// ---------------------------------------------------------------- simulation

struct BallState {
  Vec2 pos;
  Vec2 vel;  // room-lengths per unit time; generators use unit speed
};

struct Trajectory {
  std::vector<Vec2> samples;  // start position, then one per 0.1 arc length
  std::uint64_t room_id = 0;
};

// One elastic reflection, as recorded by the event-logging entry point.
struct WallEvent {
  Vec2 pos;      // ball center at contact
  Vec2 normal;   // unit reflection normal (inward)
  Vec2 v_in;     // velocity before
  Vec2 v_out;    // velocity after
  double advance = 0.0;  // arc length since the previous event
  bool vertex = false;   // corner tie resolved by circle-vertex reflection
  std::int32_t edge = -1;  // wall index for edge events, nearest corner else
};

// Exact event-driven simulation: straight segments to the earliest wall
// contact, reflect v <- v - 2(v.n)n, sample positions every 0.1 of arc
// length by interpolation; speed conserved. Simultaneous two-wall contact
// reflects about the normal from the shared corner to the ball center.
// Throws simulation_error when 3 successive events advance < 1e-12 total.
Trajectory simulate(const PolygonRoom& room, BallState s0, double path_length,
                    std::uint64_t room_id = 0);

// Same stepping core, but runs for a fixed number of reflections and logs
// every event; used by the conservation and reflection-law oracles.
struct EventRun {
  std::vector<WallEvent> events;
  BallState final_state;
};
EventRun simulate_events(const PolygonRoom& room, BallState s0,
                         std::size_t max_events);

// Ball center uniform over the radius-eroded interior, direction uniform on
// the circle, unit speed.
BallState random_state(const PolygonRoom& room, Rng& rng);

// ------------------------------------------------------------ bounce dataset

struct BounceConfig {
  std::size_t trajectories = 10;
  std::size_t steps = 20;  // sampled positions per trajectory, >= 4
};

// Sliding windows over each trajectory: input = 3 consecutive positions
// (6 values), target = the next position (2 values). Rows are split by index
// parity (even -> train). hidden = the 8 canonical corner coordinates.
TaskDataset gen_bounce_dataset(Rng& rng, const BounceConfig& cfg,
                               std::uint64_t id = 0);

// Windowing helper shared by the generator and its tests: rows from one
// trajectory, appended to x_rows / y_rows.
void trajectory_windows(const Trajectory& traj,
                        std::vector<std::array<double, 6>>& x_rows,
                        std::vector<std::array<double, 2>>& y_rows);

// Rebuild the room a bounce dataset was generated in (from hidden corners).
PolygonRoom room_from_hidden(const std::vector<double>& hidden);

// ------------------------------------------------------------------- rollout

// Maps 3 consecutive positions to the predicted next position.
using StepPredictor =
    std::function<std::array<double, 2>(const std::array<double, 6>&)>;

// Closed-loop rollout: the predictor is seeded with the first 3 true samples
// and then fed its own outputs; returns the Euclidean error against the true
// simulated position at each sampled distance 0.1, 0.2, ..., horizon.
std::vector<double> rollout_eval(const StepPredictor& predictor,
                                 const PolygonRoom& room, BallState s0,
                                 double horizon);

// ------------------------------------------------------------------ ensemble

// count independent datasets; task i uses the stream derive(base_seed, i) so
// ensembles are reproducible and extendable without regenerating prefixes.
std::vector<TaskDataset> gen_ensemble(TaskFamily family, std::size_t count,
                                      std::uint64_t base_seed,
                                      const BounceConfig& bounce_cfg = {});

}  // namespace mela::tasks
