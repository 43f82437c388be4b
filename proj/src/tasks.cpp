#include "mela/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>

#include "mela/errors.hpp"

namespace mela::tasks {

// ------------------------------------------------------------------ sinusoid

TaskDataset gen_sinusoid_dataset(Rng& rng, std::uint64_t id) {
  SinusoidParams p;
  p.amp = rng.uniform(0.1, 5.0);
  p.phase = rng.uniform(0.0, std::numbers::pi);

  constexpr std::size_t kTrain = 10, kTest = 10;
  Tensor x(kTrain + kTest, 1);
  Tensor y(kTrain + kTest, 1);
  for (std::size_t i = 0; i < kTrain + kTest; ++i) {
    x(i, 0) = rng.uniform(-5.0, 5.0);
    y(i, 0) = p.value(x(i, 0));
  }
  std::vector<std::int32_t> train, test;
  for (std::size_t i = 0; i < kTrain; ++i) train.push_back(static_cast<std::int32_t>(i));
  for (std::size_t i = kTrain; i < kTrain + kTest; ++i)
    test.push_back(static_cast<std::int32_t>(i));
  return TaskDataset(TaskFamily::kSinusoid, rng.seed(), id, std::move(x),
                     std::move(y), std::move(train), std::move(test),
                     {p.amp, p.phase});
}

// -------------------------------------------------------------- room geometry

Vec2 PolygonRoom::inward_normal(std::size_t i) const {
  const Vec2 d = corners[(i + 1) % 4] - corners[i];
  const double len = d.norm();
  // Left-hand normal of a counter-clockwise edge points inward.
  return Vec2{-d.y / len, d.x / len};
}

double PolygonRoom::edge_distance(Vec2 p, std::size_t i) const {
  return inward_normal(i).dot(p - corners[i]);
}

double PolygonRoom::area() const {
  double twice = 0.0;
  for (std::size_t i = 0; i < 4; ++i) twice += corners[i].cross(corners[(i + 1) % 4]);
  return 0.5 * twice;
}

double PolygonRoom::inradius() const {
  // Maximize rho subject to n_i . p - off_i >= rho over the four edge lines.
  // A linear program this small is solved exactly by enumerating constraint
  // triples: some optimum always has three active constraints (a degenerate
  // optimal face, e.g. between parallel edges, still ends at one).
  Vec2 n[4];
  double off[4];
  for (std::size_t i = 0; i < 4; ++i) {
    n[i] = inward_normal(i);
    off[i] = n[i].dot(corners[i]);
  }
  double best = 0.0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b)
      for (std::size_t c = b + 1; c < 4; ++c) {
        // Solve [n.x n.y -1] [px py rho]^T = off for the three lines.
        const double m[3][3] = {{n[a].x, n[a].y, -1.0},
                                {n[b].x, n[b].y, -1.0},
                                {n[c].x, n[c].y, -1.0}};
        const double rhs[3] = {off[a], off[b], off[c]};
        const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if (std::abs(det) < 1e-14) continue;  // near-parallel triple
        auto solve_col = [&](int col) {
          double mm[3][3];
          for (int r = 0; r < 3; ++r)
            for (int cc = 0; cc < 3; ++cc) mm[r][cc] = cc == col ? rhs[r] : m[r][cc];
          return (mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1]) -
                  mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0]) +
                  mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0])) /
                 det;
        };
        const Vec2 p{solve_col(0), solve_col(1)};
        const double rho = solve_col(2);
        if (rho <= best) continue;
        bool feasible = true;
        for (std::size_t i = 0; i < 4 && feasible; ++i)
          feasible = n[i].dot(p) - off[i] >= rho - 1e-12;
        if (feasible) best = rho;
      }
  return best;
}

bool PolygonRoom::contains_disc(Vec2 p, double radius, double slack) const {
  for (std::size_t i = 0; i < 4; ++i)
    if (edge_distance(p, i) < radius - slack) return false;
  return true;
}

std::array<double, 8> PolygonRoom::flat_corners() const {
  return {corners[0].x, corners[0].y, corners[1].x, corners[1].y,
          corners[2].x, corners[2].y, corners[3].x, corners[3].y};
}

bool strictly_convex(const std::array<Vec2, 4>& corners) {
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec2 e0 = corners[(i + 1) % 4] - corners[i];
    const Vec2 e1 = corners[(i + 2) % 4] - corners[(i + 1) % 4];
    if (!(e0.cross(e1) > 0.0)) return false;
  }
  return true;
}

void PolygonRoom::validate() const {
  if (!strictly_convex(corners))
    throw contract_error("room corners are not strictly convex in CCW order");
  for (const Vec2& c : corners)
    if (c.x < 0.0 || c.x > 1.0 || c.y < 0.0 || c.y > 1.0)
      throw contract_error("room corner outside the unit square");
  for (std::size_t i = 1; i < 4; ++i)
    if (corners[i].y < corners[0].y ||
        (corners[i].y == corners[0].y && corners[i].x < corners[0].x))
      throw contract_error("room corners are not in canonical rotation");
  if (!(inradius() > kBallRadius))
    throw contract_error("room cannot fit the ball (inradius too small)");
}

namespace {

std::array<Vec2, 4> canonical_rotation(std::array<Vec2, 4> c) {
  std::size_t first = 0;
  for (std::size_t i = 1; i < 4; ++i)
    if (c[i].y < c[first].y || (c[i].y == c[first].y && c[i].x < c[first].x))
      first = i;
  std::rotate(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(first), c.end());
  return c;
}

}  // namespace

PolygonRoom gen_room(Rng& rng) {
  constexpr int kBudget = 10000;
  for (int tries = 0; tries < kBudget; ++tries) {
    std::array<Vec2, 4> pts;
    for (Vec2& p : pts) p = {rng.uniform(), rng.uniform()};
    Vec2 centroid{0.0, 0.0};
    for (const Vec2& p : pts) centroid = centroid + p * 0.25;
    std::sort(pts.begin(), pts.end(), [centroid](Vec2 a, Vec2 b) {
      return std::atan2(a.y - centroid.y, a.x - centroid.x) <
             std::atan2(b.y - centroid.y, b.x - centroid.x);
    });
    if (!strictly_convex(pts)) continue;
    PolygonRoom room{canonical_rotation(pts)};
    if (!(room.inradius() > kBallRadius)) continue;
    return room;
  }
  throw generator_error("no viable room in " + std::to_string(kBudget) +
                        " rejection-sampling tries");
}

// ---------------------------------------------------------------- simulation

namespace {

std::string state_dump(const PolygonRoom& room, const BallState& s) {
  std::string msg = "pos=(" + std::to_string(s.pos.x) + ", " +
                    std::to_string(s.pos.y) + ") vel=(" +
                    std::to_string(s.vel.x) + ", " + std::to_string(s.vel.y) +
                    ") edge distances:";
  for (std::size_t i = 0; i < 4; ++i)
    msg += " " + std::to_string(room.edge_distance(s.pos, i));
  return msg;
}

// Shared event-driven stepping core. Advances in straight segments to the
// earliest shifted-wall contact, emitting arc-length grid samples on the way,
// then reflects. Stops at whichever limit is reached first.
template <typename OnSample, typename OnEvent>
BallState run_sim(const PolygonRoom& room, BallState s, double max_arc,
                  std::size_t max_events, OnSample&& on_sample,
                  OnEvent&& on_event) {
  const double speed = s.vel.norm();
  if (!(speed > 0.0)) throw contract_error("simulation needs nonzero speed");
  if (!room.contains_disc(s.pos, kBallRadius, 1e-9))
    throw contract_error("initial ball center outside the eroded room: " +
                         state_dump(room, s));

  Vec2 n[4];
  double off[4];
  for (std::size_t i = 0; i < 4; ++i) {
    n[i] = room.inward_normal(i);
    off[i] = n[i].dot(room.corners[i]);
  }

  double arc = 0.0;
  std::uint64_t next_k = 1;  // next sample index on the 0.1 grid
  std::size_t events = 0;
  double recent[3] = {0.0, 0.0, 0.0};  // advances of the last 3 events

  while (true) {
    // Earliest wall the center is approaching.
    double best_t = std::numeric_limits<double>::infinity();
    int best_i = -1, tie_i = -1;
    for (int i = 0; i < 4; ++i) {
      const double approach = n[i].dot(s.vel);
      if (approach >= 0.0) continue;
      const double d = n[i].dot(s.pos) - off[i];
      double t = (kBallRadius - d) / approach;
      if (t < 0.0) t = 0.0;  // already at/past the wall by rounding
      if (t < best_t) {
        best_t = t;
        best_i = i;
        tie_i = -1;
      } else if (t == best_t && best_i >= 0) {
        tie_i = i;
      }
    }
    if (best_i < 0)
      throw simulation_error("no approaching wall (degenerate state): " +
                             state_dump(room, s));

    const double seg_arc = best_t * speed;
    const double end_arc = arc + seg_arc;
    const Vec2 dir = s.vel * (1.0 / speed);

    // Samples on (arc, min(end_arc, max_arc)].
    while (true) {
      const double g = static_cast<double>(next_k) * kSampleSpacing;
      if (g > max_arc || g > end_arc) break;
      on_sample(s.pos + dir * (g - arc));
      ++next_k;
    }
    if (end_arc >= max_arc) {
      s.pos = s.pos + dir * (max_arc - arc);
      return s;
    }

    // Advance to contact and reflect.
    s.pos = s.pos + s.vel * best_t;
    arc = end_arc;

    Vec2 normal;
    bool vertex = false;
    std::int32_t which = best_i;
    if (tie_i >= 0) {
      // Two walls at once. Adjacent walls share a corner: classic
      // circle-vertex reflection about the corner-to-center direction.
      int corner = -1;
      if ((best_i + 1) % 4 == tie_i)
        corner = tie_i;
      else if ((tie_i + 1) % 4 == best_i)
        corner = best_i;
      if (corner >= 0) {
        const Vec2 d = s.pos - room.corners[static_cast<std::size_t>(corner)];
        const double len = d.norm();
        if (len > 0.0) {
          normal = d * (1.0 / len);
          vertex = true;
          which = corner;
        } else {
          normal = n[best_i];
        }
      } else {
        // Opposite walls tying exactly (squeezed sliver): resolve one now;
        // the other follows as an immediate zero-advance event.
        normal = n[best_i];
      }
    } else {
      normal = n[best_i];
    }

    const Vec2 v_in = s.vel;
    const double vn = s.vel.dot(normal);
    if (vn < 0.0) s.vel = s.vel - normal * (2.0 * vn);
    // Pin the speed so reflection rounding cannot accumulate into drift.
    s.vel = s.vel * (speed / s.vel.norm());

    recent[events % 3] = seg_arc;
    ++events;
    on_event(WallEvent{s.pos, normal, v_in, s.vel, seg_arc, vertex, which});
    if (events >= 3 && recent[0] + recent[1] + recent[2] < 1e-12)
      throw simulation_error("trapped: 3 events with no forward progress; " +
                             state_dump(room, s));
    if (events >= max_events) return s;
  }
}

}  // namespace

Trajectory simulate(const PolygonRoom& room, BallState s0, double path_length,
                    std::uint64_t room_id) {
  if (!(path_length >= 0.0))
    throw contract_error("path_length must be nonnegative");
  Trajectory traj;
  traj.room_id = room_id;
  traj.samples.push_back(s0.pos);
  run_sim(
      room, s0, path_length, std::numeric_limits<std::size_t>::max(),
      [&traj](Vec2 p) { traj.samples.push_back(p); }, [](const WallEvent&) {});
  return traj;
}

EventRun simulate_events(const PolygonRoom& room, BallState s0,
                         std::size_t max_events) {
  EventRun run;
  run.final_state =
      run_sim(room, s0, std::numeric_limits<double>::infinity(), max_events,
              [](Vec2) {}, [&run](const WallEvent& e) { run.events.push_back(e); });
  return run;
}

BallState random_state(const PolygonRoom& room, Rng& rng) {
  double lo_x = 1.0, hi_x = 0.0, lo_y = 1.0, hi_y = 0.0;
  for (const Vec2& c : room.corners) {
    lo_x = std::min(lo_x, c.x);
    hi_x = std::max(hi_x, c.x);
    lo_y = std::min(lo_y, c.y);
    hi_y = std::max(hi_y, c.y);
  }
  constexpr int kBudget = 1000000;
  for (int tries = 0; tries < kBudget; ++tries) {
    const Vec2 p{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
    if (!room.contains_disc(p, kBallRadius + 1e-12)) continue;
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return BallState{p, Vec2{std::cos(angle), std::sin(angle)}};
  }
  throw generator_error("no interior ball position found (room too tight)");
}

// ------------------------------------------------------------ bounce dataset

void trajectory_windows(const Trajectory& traj,
                        std::vector<std::array<double, 6>>& x_rows,
                        std::vector<std::array<double, 2>>& y_rows) {
  if (traj.samples.size() < 4) return;
  for (std::size_t i = 0; i + 3 < traj.samples.size(); ++i) {
    const Vec2 a = traj.samples[i], b = traj.samples[i + 1],
               c = traj.samples[i + 2], d = traj.samples[i + 3];
    x_rows.push_back({a.x, a.y, b.x, b.y, c.x, c.y});
    y_rows.push_back({d.x, d.y});
  }
}

TaskDataset gen_bounce_dataset(Rng& rng, const BounceConfig& cfg,
                               std::uint64_t id) {
  if (cfg.steps < 4)
    throw contract_error("a window needs at least 4 sampled positions");
  if (cfg.trajectories < 1)
    throw contract_error("at least one trajectory per room");

  const PolygonRoom room = gen_room(rng);
  std::vector<std::array<double, 6>> x_rows;
  std::vector<std::array<double, 2>> y_rows;
  for (std::size_t t = 0; t < cfg.trajectories; ++t) {
    const BallState s0 = random_state(room, rng);
    const Trajectory traj = simulate(
        room, s0, static_cast<double>(cfg.steps - 1) * kSampleSpacing, id);
    trajectory_windows(traj, x_rows, y_rows);
  }

  Tensor x(x_rows.size(), 6);
  Tensor y(y_rows.size(), 2);
  for (std::size_t r = 0; r < x_rows.size(); ++r) {
    for (std::size_t c = 0; c < 6; ++c) x(r, c) = x_rows[r][c];
    for (std::size_t c = 0; c < 2; ++c) y(r, c) = y_rows[r][c];
  }
  // Split transitions 50/50 by row parity (even rows train).
  std::vector<std::int32_t> train, test;
  for (std::size_t r = 0; r < x_rows.size(); ++r)
    (r % 2 == 0 ? train : test).push_back(static_cast<std::int32_t>(r));

  const std::array<double, 8> corners = room.flat_corners();
  return TaskDataset(TaskFamily::kBounce, rng.seed(), id, std::move(x),
                     std::move(y), std::move(train), std::move(test),
                     std::vector<double>(corners.begin(), corners.end()));
}

PolygonRoom room_from_hidden(const std::vector<double>& hidden) {
  if (hidden.size() != 8)
    throw contract_error("bounce hidden params must hold 8 corner values, got " +
                         std::to_string(hidden.size()));
  PolygonRoom room;
  for (std::size_t i = 0; i < 4; ++i)
    room.corners[i] = Vec2{hidden[2 * i], hidden[2 * i + 1]};
  room.validate();
  return room;
}

// ------------------------------------------------------------------- rollout

std::vector<double> rollout_eval(const StepPredictor& predictor,
                                 const PolygonRoom& room, BallState s0,
                                 double horizon) {
  if (!(horizon > 0.0)) throw contract_error("rollout horizon must be positive");
  const auto k_steps =
      static_cast<std::size_t>(std::llround(horizon / kSampleSpacing));

  // Ground truth: 3 seed samples plus one per prediction step.
  const Trajectory truth =
      simulate(room, s0, static_cast<double>(k_steps + 2) * kSampleSpacing);
  std::array<double, 6> window = {truth.samples[0].x, truth.samples[0].y,
                                  truth.samples[1].x, truth.samples[1].y,
                                  truth.samples[2].x, truth.samples[2].y};
  std::vector<double> errors;
  errors.reserve(k_steps);
  for (std::size_t k = 0; k < k_steps; ++k) {
    const std::array<double, 2> pred = predictor(window);
    const Vec2 actual = truth.samples[3 + k];
    const double dx = pred[0] - actual.x, dy = pred[1] - actual.y;
    errors.push_back(std::sqrt(dx * dx + dy * dy));
    // Closed loop: the prediction becomes the newest window entry.
    window = {window[2], window[3], window[4], window[5], pred[0], pred[1]};
  }
  return errors;
}

// ------------------------------------------------------------------ ensemble

std::vector<TaskDataset> gen_ensemble(TaskFamily family, std::size_t count,
                                      std::uint64_t base_seed,
                                      const BounceConfig& bounce_cfg) {
  std::vector<TaskDataset> out;
  out.reserve(count);
  const Rng root(base_seed);
  for (std::size_t i = 0; i < count; ++i) {
    Rng task_rng = root.derive(i);
    out.push_back(family == TaskFamily::kSinusoid
                      ? gen_sinusoid_dataset(task_rng, i)
                      : gen_bounce_dataset(task_rng, bounce_cfg, i));
  }
  return out;
}

}  // namespace mela::tasks
