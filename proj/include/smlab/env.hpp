#pragma once

// Seedable egocentric gridworlds: NoisyTvGrid (maze + a carried white-noise TV)
// and KeyDoorGrid (key, locked door, goal behind the door).

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smlab/errors.hpp"
#include "smlab/rng.hpp"

namespace smlab {

using Observation = Eigen::RowVectorXd;

enum class Cell : std::uint8_t { empty, wall, goal, key, door_closed, door_open };

// Clockwise with y pointing down: turning right adds one.
enum class Dir : int { east = 0, south = 1, west = 2, north = 3 };

struct Pos {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pos&, const Pos&) = default;
};

inline Pos step_in(Pos p, Dir d) {
  static constexpr std::array<int, 4> dx{1, 0, -1, 0};
  static constexpr std::array<int, 4> dy{0, 1, 0, -1};
  return {p.x + dx[static_cast<int>(d)], p.y + dy[static_cast<int>(d)]};
}
inline Dir turn_right(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 1) % 4); }
inline Dir turn_left(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 3) % 4); }

enum class EnvKind { noisy_tv, key_door };

inline EnvKind parse_env_kind(const std::string& s) {
  if (s == "noisy_tv") return EnvKind::noisy_tv;
  if (s == "key_door") return EnvKind::key_door;
  throw ConfigError("unknown env.name '" + s + "' (expected noisy_tv or key_door)");
}

inline std::string to_string(EnvKind k) { return k == EnvKind::noisy_tv ? "noisy_tv" : "key_door"; }

struct EnvConfig {
  EnvKind kind = EnvKind::noisy_tv;
  int grid_size = 9;
  int max_steps = 0;                      // 0: 200 for noisy_tv, 300 for key_door
  std::optional<bool> maze_per_episode;   // unset: true for noisy_tv, false for key_door
  std::uint64_t seed = 0;                 // layout seed when the layout is fixed

  int resolved_max_steps() const { return max_steps > 0 ? max_steps : (kind == EnvKind::noisy_tv ? 200 : 300); }
  bool resolved_maze_per_episode() const { return maze_per_episode.value_or(kind == EnvKind::noisy_tv); }
};

struct StepInfo {
  bool watched = false;
  bool reached_goal = false;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct ScanPoint {
  Pos pos;
  Dir dir = Dir::east;
};

inline constexpr int kViewSize = 5;
inline constexpr int kViewRadius = 2;

class GridEnv {
 public:
  explicit GridEnv(const EnvConfig& cfg) : cfg_(cfg) {
    if (cfg.grid_size < 5 || cfg.grid_size % 2 == 0) throw ConfigError("env.grid_size must be odd and >= 5");
    if (cfg.max_steps < 0) throw ConfigError("env.max_steps must be >= 0");
  }
  virtual ~GridEnv() = default;

  virtual int obs_dim() const = 0;
  virtual int num_actions() const = 0;
  virtual std::string action_name(int a) const = 0;

  const EnvConfig& config() const { return cfg_; }
  int size() const { return cfg_.grid_size; }
  int max_steps() const { return cfg_.resolved_max_steps(); }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  Pos agent() const { return agent_; }
  Dir heading() const { return dir_; }
  Pos start() const { return {1, 1}; }
  // Egocentric view at the current pose (never noise).
  Observation current_observation() const { return observe(); }

  Cell cell(Pos p) const {
    if (!in_bounds(p)) return Cell::wall;
    return grid_[static_cast<std::size_t>(p.y * size() + p.x)];
  }
  bool in_bounds(Pos p) const { return p.x >= 0 && p.y >= 0 && p.x < size() && p.y < size(); }

  Observation reset(std::uint64_t episode_seed) {
    const std::uint64_t layout_seed = cfg_.resolved_maze_per_episode() ? episode_seed : cfg_.seed;
    if (!layout_ready_ || cfg_.resolved_maze_per_episode()) {
      generate(layout_seed);
      layout_ready_ = true;
      base_grid_ = grid_;
    } else {
      grid_ = base_grid_;
    }
    RngStream episode(episode_seed, streams::kEnv);
    agent_ = start();
    dir_ = static_cast<Dir>(episode.below(4));
    noise_ = RngStream(episode_seed, streams::kEnv * 1000 + 1);
    steps_ = 0;
    done_ = false;
    on_reset();
    return observe();
  }

  StepResult step(int action) {
    if (done_) throw UsageError("env: step after episode end");
    if (action < 0 || action >= num_actions()) throw UsageError("env: action out of range");
    StepResult r;
    ++steps_;
    apply(action, r);
    if (r.info.reached_goal) {
      r.reward = 1.0;
      done_ = true;
    }
    if (steps_ >= max_steps()) done_ = true;
    r.done = done_;
    if (r.obs.size() == 0) r.obs = observe();
    return r;
  }

  // Analysis mode: teleports through the points and returns one observation
  // each. World and agent state are restored afterwards.
  std::vector<Observation> scripted_scan(const std::vector<ScanPoint>& points) {
    for (const auto& p : points) {
      if (!in_bounds(p.pos) || cell(p.pos) == Cell::wall) throw UsageError("scripted_scan: wall or out-of-bounds cell");
    }
    const Pos saved_pos = agent_;
    const Dir saved_dir = dir_;
    std::vector<Observation> out;
    out.reserve(points.size());
    for (const auto& p : points) {
      agent_ = p.pos;
      dir_ = p.dir;
      out.push_back(observe());
    }
    agent_ = saved_pos;
    dir_ = saved_dir;
    return out;
  }

  // Non-wall, non-door cells in row-major order.
  std::vector<Pos> floor_cells() const {
    std::vector<Pos> out;
    for (int y = 0; y < size(); ++y)
      for (int x = 0; x < size(); ++x) {
        const Cell c = cell({x, y});
        if (c != Cell::wall && c != Cell::door_closed && c != Cell::door_open) out.push_back({x, y});
      }
    return out;
  }

  // Every non-wall cell is reachable from the start when doors count as open.
  bool connected() const {
    std::vector<char> seen(grid_.size(), 0);
    std::deque<Pos> frontier{start()};
    seen[static_cast<std::size_t>(start().y * size() + start().x)] = 1;
    while (!frontier.empty()) {
      const Pos p = frontier.front();
      frontier.pop_front();
      for (int d = 0; d < 4; ++d) {
        const Pos q = step_in(p, static_cast<Dir>(d));
        if (!in_bounds(q) || cell(q) == Cell::wall) continue;
        auto& s = seen[static_cast<std::size_t>(q.y * size() + q.x)];
        if (!s) {
          s = 1;
          frontier.push_back(q);
        }
      }
    }
    for (std::size_t i = 0; i < grid_.size(); ++i)
      if (grid_[i] != Cell::wall && !seen[i]) return false;
    return true;
  }

  std::string render() const {
    std::string s;
    for (int y = 0; y < size(); ++y) {
      for (int x = 0; x < size(); ++x) {
        if (agent_ == Pos{x, y}) {
          s += ">v<^"[static_cast<int>(dir_)];
          continue;
        }
        switch (cell({x, y})) {
          case Cell::empty: s += '.'; break;
          case Cell::wall: s += '#'; break;
          case Cell::goal: s += 'G'; break;
          case Cell::key: s += 'K'; break;
          case Cell::door_closed: s += 'D'; break;
          case Cell::door_open: s += '/'; break;
        }
      }
      s += '\n';
    }
    return s;
  }

  // Test and analysis hooks.
  void set_agent(Pos p, Dir d) {
    agent_ = p;
    dir_ = d;
  }

 protected:
  virtual void generate(std::uint64_t layout_seed) = 0;
  virtual void on_reset() {}
  // Fills r.info and, for observations other than the egocentric view, r.obs.
  virtual void apply(int action, StepResult& r) = 0;
  virtual Observation observe() const = 0;

  void set_cell(Pos p, Cell c) { grid_[static_cast<std::size_t>(p.y * size() + p.x)] = c; }
  void fill_walls() { grid_.assign(static_cast<std::size_t>(size() * size()), Cell::wall); }

  // World cell seen at view position (row, col); row 0 is farthest ahead.
  Pos view_to_world(int row, int col) const {
    const int ahead = kViewRadius - row;
    const int right = col - kViewRadius;
    const Pos f = step_in({0, 0}, dir_);
    const Pos r = step_in({0, 0}, turn_right(dir_));
    return {agent_.x + ahead * f.x + right * r.x, agent_.y + ahead * f.y + right * r.y};
  }

  // Moves forward unless blocked; returns true on entering the goal.
  bool move_forward() {
    const Pos next = step_in(agent_, dir_);
    const Cell c = cell(next);
    if (c == Cell::wall || c == Cell::key || c == Cell::door_closed) return false;
    agent_ = next;
    return c == Cell::goal;
  }

  EnvConfig cfg_;
  std::vector<Cell> grid_;
  std::vector<Cell> base_grid_;
  bool layout_ready_ = false;
  Pos agent_;
  Dir dir_ = Dir::east;
  int steps_ = 0;
  bool done_ = true;
  RngStream noise_{0, streams::kEnv};
};

// Depth-first backtracker over odd coordinates; every floor cell is connected.
inline void carve_maze(std::vector<Cell>& grid, int size, RngStream& rng) {
  grid.assign(static_cast<std::size_t>(size * size), Cell::wall);
  auto at = [&](int x, int y) -> Cell& { return grid[static_cast<std::size_t>(y * size + x)]; };
  std::vector<Pos> stack{{1, 1}};
  at(1, 1) = Cell::empty;
  while (!stack.empty()) {
    const Pos p = stack.back();
    std::array<Pos, 4> options;
    int count = 0;
    for (int d = 0; d < 4; ++d) {
      const Pos mid = step_in(p, static_cast<Dir>(d));
      const Pos next = step_in(mid, static_cast<Dir>(d));
      if (next.x > 0 && next.y > 0 && next.x < size - 1 && next.y < size - 1 && at(next.x, next.y) == Cell::wall) {
        options[count++] = next;
      }
    }
    if (count == 0) {
      stack.pop_back();
      continue;
    }
    const Pos next = options[rng.below(static_cast<std::uint64_t>(count))];
    at((p.x + next.x) / 2, (p.y + next.y) / 2) = Cell::empty;
    at(next.x, next.y) = Cell::empty;
    stack.push_back(next);
  }
}

class NoisyTvGrid : public GridEnv {
 public:
  enum Action { kTurnLeft = 0, kTurnRight = 1, kForward = 2, kWatch = 3 };
  static constexpr int kCategories = 4;  // empty, wall, goal, out-of-bounds

  explicit NoisyTvGrid(const EnvConfig& cfg) : GridEnv(cfg) {}

  int obs_dim() const override { return kViewSize * kViewSize * kCategories; }
  int num_actions() const override { return 4; }
  std::string action_name(int a) const override {
    static const char* names[] = {"turn_left", "turn_right", "forward", "watch"};
    return names[a];
  }
  Pos goal() const { return goal_; }

 protected:
  void generate(std::uint64_t layout_seed) override {
    RngStream rng(layout_seed, streams::kEnv * 1000 + 2);
    carve_maze(grid_, size(), rng);
    std::vector<Pos> candidates;
    for (int y = 0; y < size(); ++y)
      for (int x = 0; x < size(); ++x)
        if (cell({x, y}) == Cell::empty && !(Pos{x, y} == start())) candidates.push_back({x, y});
    goal_ = candidates[rng.below(candidates.size())];
    set_cell(goal_, Cell::goal);
  }

  void apply(int action, StepResult& r) override {
    switch (action) {
      case kTurnLeft: dir_ = turn_left(dir_); break;
      case kTurnRight: dir_ = turn_right(dir_); break;
      case kForward: r.info.reached_goal = move_forward(); break;
      case kWatch: {
        r.info.watched = true;
        r.obs.resize(obs_dim());
        for (int i = 0; i < obs_dim(); ++i) r.obs(i) = noise_.normal();
        break;
      }
    }
  }

  Observation observe() const override {
    Observation o = Observation::Zero(obs_dim());
    for (int row = 0; row < kViewSize; ++row)
      for (int col = 0; col < kViewSize; ++col) {
        const Pos w = view_to_world(row, col);
        int cat = 3;
        if (in_bounds(w)) {
          const Cell c = cell(w);
          cat = c == Cell::wall ? 1 : (c == Cell::goal ? 2 : 0);
        }
        o((row * kViewSize + col) * kCategories + cat) = 1.0;
      }
    return o;
  }

 private:
  Pos goal_;
};

class KeyDoorGrid : public GridEnv {
 public:
  enum Action { kTurnLeft = 0, kTurnRight = 1, kForward = 2, kPickup = 3, kToggle = 4 };
  // empty, wall, key, door-closed, door-open, goal; out-of-bounds reads as wall
  static constexpr int kCategories = 6;

  explicit KeyDoorGrid(const EnvConfig& cfg) : GridEnv(cfg) {}

  int obs_dim() const override { return kViewSize * kViewSize * kCategories + 1; }
  int num_actions() const override { return 5; }
  std::string action_name(int a) const override {
    static const char* names[] = {"turn_left", "turn_right", "forward", "pickup", "toggle"};
    return names[a];
  }

  bool carrying() const { return carrying_; }
  Pos key_pos() const { return key_; }
  Pos door_pos() const { return door_; }
  Pos goal() const { return goal_; }

  // Planning/analysis hooks.
  void remove_key() { set_cell(key_, Cell::empty); }
  void open_door() { set_cell(door_, Cell::door_open); }

 protected:
  void generate(std::uint64_t layout_seed) override {
    RngStream rng(layout_seed, streams::kEnv * 1000 + 3);
    const int s = size();
    fill_walls();
    for (int y = 1; y < s - 1; ++y)
      for (int x = 1; x < s - 1; ++x) set_cell({x, y}, Cell::empty);
    // Splitting wall leaves at least one column on each side.
    const int wall_x = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s - 4)));
    for (int y = 1; y < s - 1; ++y) set_cell({wall_x, y}, Cell::wall);
    door_ = {wall_x, 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s - 2)))};
    set_cell(door_, Cell::door_closed);
    std::vector<Pos> left, right;
    for (int y = 1; y < s - 1; ++y) {
      for (int x = 1; x < wall_x; ++x)
        if (!(Pos{x, y} == start())) left.push_back({x, y});
      for (int x = wall_x + 1; x < s - 1; ++x) right.push_back({x, y});
    }
    key_ = left[rng.below(left.size())];
    goal_ = right[rng.below(right.size())];
    set_cell(key_, Cell::key);
    set_cell(goal_, Cell::goal);
  }

  void on_reset() override { carrying_ = false; }

  void apply(int action, StepResult& r) override {
    const Pos ahead = step_in(agent_, dir_);
    switch (action) {
      case kTurnLeft: dir_ = turn_left(dir_); break;
      case kTurnRight: dir_ = turn_right(dir_); break;
      case kForward: r.info.reached_goal = move_forward(); break;
      case kPickup:
        if (!carrying_ && cell(ahead) == Cell::key) {
          carrying_ = true;
          set_cell(ahead, Cell::empty);
        }
        break;
      case kToggle:
        if (carrying_ && cell(ahead) == Cell::door_closed) set_cell(ahead, Cell::door_open);
        break;
    }
  }

  Observation observe() const override {
    Observation o = Observation::Zero(obs_dim());
    for (int row = 0; row < kViewSize; ++row)
      for (int col = 0; col < kViewSize; ++col) {
        const Cell c = cell(view_to_world(row, col));
        int cat = 0;
        switch (c) {
          case Cell::empty: cat = 0; break;
          case Cell::wall: cat = 1; break;
          case Cell::key: cat = 2; break;
          case Cell::door_closed: cat = 3; break;
          case Cell::door_open: cat = 4; break;
          case Cell::goal: cat = 5; break;
        }
        o((row * kViewSize + col) * kCategories + cat) = 1.0;
      }
    o(obs_dim() - 1) = carrying_ ? 1.0 : 0.0;
    return o;
  }

 private:
  Pos key_, door_, goal_;
  bool carrying_ = false;
};

inline std::unique_ptr<GridEnv> make_env(const EnvConfig& cfg) {
  if (cfg.kind == EnvKind::noisy_tv) return std::make_unique<NoisyTvGrid>(cfg);
  return std::make_unique<KeyDoorGrid>(cfg);
}

// Shortest action sequence (turns + forwards) that ends facing `target`, or
// standing on it when `enter` is true. Keys and closed doors block movement.
inline std::optional<std::vector<int>> plan_route(const GridEnv& env, Pos from, Dir dir, Pos target, bool enter) {
  const int s = env.size();
  auto idx = [s](Pos p, Dir d) { return (p.y * s + p.x) * 4 + static_cast<int>(d); };
  std::vector<int> parent(static_cast<std::size_t>(s * s * 4), -2);
  std::vector<int> via(parent.size(), -1);
  std::deque<std::pair<Pos, Dir>> q{{from, dir}};
  parent[static_cast<std::size_t>(idx(from, dir))] = -1;
  auto finished = [&](Pos p, Dir d) { return enter ? p == target : step_in(p, d) == target; };
  while (!q.empty()) {
    auto [p, d] = q.front();
    q.pop_front();
    if (finished(p, d)) {
      std::vector<int> actions;
      for (int cur = idx(p, d); parent[static_cast<std::size_t>(cur)] != -1; cur = parent[static_cast<std::size_t>(cur)]) {
        actions.push_back(via[static_cast<std::size_t>(cur)]);
      }
      return std::vector<int>(actions.rbegin(), actions.rend());
    }
    const std::array<std::pair<Pos, Dir>, 3> next{
        {{p, turn_left(d)}, {p, turn_right(d)}, {step_in(p, d), d}}};
    for (int a = 0; a < 3; ++a) {
      auto [np, nd] = next[a];
      const Cell c = env.cell(np);
      if (a == 2 && (c == Cell::wall || c == Cell::key || c == Cell::door_closed)) continue;
      if (a == 2 && c == Cell::goal && !(enter && np == target)) continue;
      const int k = idx(np, nd);
      if (parent[static_cast<std::size_t>(k)] != -2) continue;
      parent[static_cast<std::size_t>(k)] = idx(p, d);
      via[static_cast<std::size_t>(k)] = a;  // 0 left, 1 right, 2 forward: matches both action enums
      q.push_back({np, nd});
    }
  }
  return std::nullopt;
}

// Walk to the key, pick it up, open the door, walk to the goal.
inline std::optional<std::vector<int>> solve_keydoor(const KeyDoorGrid& env) {
  std::vector<int> plan;
  Pos p = env.agent();
  Dir d = env.heading();
  auto follow = [&](const std::vector<int>& leg) {
    for (int a : leg) {
      if (a == 0) d = turn_left(d);
      else if (a == 1) d = turn_right(d);
      else p = step_in(p, d);
      plan.push_back(a);
    }
  };
  auto to_key = plan_route(env, p, d, env.key_pos(), false);
  if (!to_key) return std::nullopt;
  follow(*to_key);
  plan.push_back(KeyDoorGrid::kPickup);
  // The key cell is empty after pickup; plan on a copy of the world.
  KeyDoorGrid sim = env;
  sim.set_agent(p, d);
  sim.remove_key();
  auto to_door = plan_route(sim, p, d, env.door_pos(), false);
  if (!to_door) return std::nullopt;
  follow(*to_door);
  plan.push_back(KeyDoorGrid::kToggle);
  sim.open_door();
  auto to_goal = plan_route(sim, p, d, env.goal(), true);
  if (!to_goal) return std::nullopt;
  follow(*to_goal);
  return plan;
}

}  // namespace smlab
