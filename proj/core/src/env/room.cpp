#include "roomprobe/env/room.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace roomprobe::env {

namespace {

inline int idx(int row, int col) { return row * kCanvasCols + col; }
inline int idx(Pos p) { return p.row * kCanvasCols + p.col; }

inline bool on_canvas(int row, int col) {
  return row >= 0 && row < kCanvasRows && col >= 0 && col < kCanvasCols;
}

inline int cheb(Pos a, Pos b) { return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col)); }
inline int manh(Pos a, Pos b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

}  // namespace

char glyph_char(int32_t g) {
  switch (g) {
    case kFloor: return '.';
    case kWall: return '#';
    case kAgent: return '@';
    case kStairUp: return '<';
    case kStairDown: return '>';
    case kMonster: return 'd';
    case kCorpse: return '%';
    case kTrapRevealed: return '^';
    case kUnseen: return ' ';
    case kPad: return '~';
    default: return '?';
  }
}

std::string room_kind_name(RoomKind k) {
  switch (k) {
    case RoomKind::kRandom: return "random";
    case RoomKind::kMonster: return "monster";
    case RoomKind::kTrap: return "trap";
    case RoomKind::kUltimate: return "ultimate";
  }
  return "?";
}

std::optional<RoomKind> parse_room_kind(const std::string& s) {
  if (s == "random") return RoomKind::kRandom;
  if (s == "monster") return RoomKind::kMonster;
  if (s == "trap") return RoomKind::kTrap;
  if (s == "ultimate") return RoomKind::kUltimate;
  return std::nullopt;
}

RoomConfig RoomConfig::for_kind(RoomKind kind) {
  RoomConfig c;
  c.kind = kind;
  switch (kind) {
    case RoomKind::kRandom: break;
    case RoomKind::kMonster: c.n_monsters = 3; break;
    case RoomKind::kTrap: c.n_traps = 15; break;
    case RoomKind::kUltimate:
      c.n_monsters = 3;
      c.n_traps = 15;
      c.lit = false;
      break;
  }
  return c;
}

Pos action_delta(int action) {
  static constexpr Pos kDeltas[8] = {
      {-1, 0},  // N
      {0, 1},   // E
      {1, 0},   // S
      {0, -1},  // W
      {-1, 1},  // NE
      {1, 1},   // SE
      {1, -1},  // SW
      {-1, -1}  // NW
  };
  return kDeltas[action];
}

RoomEnv::RoomEnv(RoomConfig config) : config_(config) {
  const int free_cells = kInterior * kInterior;
  if (2 + config.n_monsters + config.n_traps > free_cells)
    throw std::invalid_argument("room interior too small for entity count");
}

bool RoomEnv::in_room(Pos p) const {
  return p.row >= kAnchorRow && p.row < kAnchorRow + kInterior && p.col >= kAnchorCol &&
         p.col < kAnchorCol + kInterior;
}

bool RoomEnv::is_floor_terrain(Pos p) const {
  return on_canvas(p.row, p.col) && state_.terrain[idx(p)] == kFloor;
}

bool RoomEnv::monster_at(Pos p) const {
  for (const auto& m : state_.monsters)
    if (m.alive && m.pos == p) return true;
  return false;
}

const TrapState* RoomEnv::trap_at(Pos p) const {
  for (const auto& t : state_.traps)
    if (t.pos == p) return &t;
  return nullptr;
}

TrapState* RoomEnv::trap_at(Pos p) {
  for (auto& t : state_.traps)
    if (t.pos == p) return &t;
  return nullptr;
}

void RoomEnv::reveal_around(Pos p) {
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      const int r = p.row + dr, c = p.col + dc;
      if (on_canvas(r, c)) state_.explored[idx(r, c)] = 1;
    }
}

Observation RoomEnv::reset(uint64_t seed) {
  state_ = EnvState{};
  state_.rng = nn::Rng(seed);

  state_.terrain.fill(kUnseen);  // void outside the room
  for (int r = kAnchorRow - 1; r <= kAnchorRow + kInterior; ++r)
    for (int c = kAnchorCol - 1; c <= kAnchorCol + kInterior; ++c) {
      const bool border = r == kAnchorRow - 1 || r == kAnchorRow + kInterior || c == kAnchorCol - 1 ||
                          c == kAnchorCol + kInterior;
      state_.terrain[idx(r, c)] = border ? kWall : kFloor;
    }

  // Distinct uniform cells for start, goal, monsters, traps.
  std::vector<Pos> cells;
  cells.reserve(kInterior * kInterior);
  for (int r = 0; r < kInterior; ++r)
    for (int c = 0; c < kInterior; ++c) cells.push_back({kAnchorRow + r, kAnchorCol + c});
  const int need = 2 + config_.n_monsters + config_.n_traps;
  for (int i = 0; i < need; ++i) {
    const int j = i + state_.rng.index(cells.size() - i);
    std::swap(cells[i], cells[j]);
  }
  state_.start = cells[0];
  state_.goal = cells[1];
  state_.agent = state_.start;
  state_.terrain[idx(state_.start)] = kStairUp;
  state_.terrain[idx(state_.goal)] = kStairDown;
  int k = 2;
  for (int i = 0; i < config_.n_monsters; ++i) state_.monsters.push_back({cells[k++], true});
  for (int i = 0; i < config_.n_traps; ++i) state_.traps.push_back({cells[k++], false});

  if (config_.lit) {
    for (int r = kAnchorRow - 1; r <= kAnchorRow + kInterior; ++r)
      for (int c = kAnchorCol - 1; c <= kAnchorCol + kInterior; ++c) state_.explored[idx(r, c)] = 1;
  } else {
    reveal_around(state_.agent);
  }
  return render_observation();
}

Pos RoomEnv::sample_teleport_destination() {
  std::vector<Pos> candidates;
  candidates.reserve(kInterior * kInterior);
  for (int r = 0; r < kInterior; ++r)
    for (int c = 0; c < kInterior; ++c) {
      const Pos p{kAnchorRow + r, kAnchorCol + c};
      if (!is_floor_terrain(p)) continue;  // stairs and walls excluded
      if (trap_at(p) != nullptr) continue;
      if (monster_at(p)) continue;
      candidates.push_back(p);
    }
  return candidates[static_cast<size_t>(state_.rng.index(candidates.size()))];
}

void RoomEnv::monster_phase(StepInfo& info) {
  for (auto& m : state_.monsters) {
    if (!m.alive) continue;
    if (cheb(m.pos, state_.agent) <= 1) {
      // Adjacent monsters attack instead of moving.
      if (state_.rng.bernoulli(config_.monster_kill_prob)) {
        info.died = true;
        return;
      }
      continue;
    }
    // Greedy chase: among enterable neighbour cells (and staying put), pick
    // the minimum (Chebyshev, Manhattan) distance to the agent; remaining
    // ties break on the seeded RNG.
    Pos best = m.pos;
    int best_cheb = cheb(m.pos, state_.agent);
    int best_manh = manh(m.pos, state_.agent);
    int n_ties = 1;
    for (int d = 0; d < 8; ++d) {
      const Pos delta = action_delta(d);
      const Pos q{m.pos.row + delta.row, m.pos.col + delta.col};
      if (!in_room(q) || state_.terrain[idx(q)] == kWall) continue;
      if (trap_at(q) != nullptr) continue;
      if (monster_at(q)) continue;
      if (q == state_.agent) continue;  // adjacency is handled as an attack
      const int qc = cheb(q, state_.agent);
      const int qm = manh(q, state_.agent);
      if (qc < best_cheb || (qc == best_cheb && qm < best_manh)) {
        best = q;
        best_cheb = qc;
        best_manh = qm;
        n_ties = 1;
      } else if (qc == best_cheb && qm == best_manh) {
        ++n_ties;
        if (state_.rng.index(n_ties) == 0) best = q;
      }
    }
    m.pos = best;
  }
}

StepResult RoomEnv::step(int action) {
  if (state_.done) throw std::logic_error("step: episode is done; call reset");
  if (action < 0 || action >= config_.n_actions())
    throw std::invalid_argument("step: action " + std::to_string(action) + " outside action set of " +
                                std::to_string(config_.n_actions()));

  state_.steps += 1;
  StepInfo info;

  const Pos delta = action_delta(action);
  const Pos target{state_.agent.row + delta.row, state_.agent.col + delta.col};

  if (in_room(target) && state_.terrain[idx(target)] != kWall) {
    if (monster_at(target)) {
      // Attack in place: the monster dies where it stood, agent stays.
      for (auto& m : state_.monsters)
        if (m.alive && m.pos == target) {
          m.alive = false;
          state_.corpses.push_back(m.pos);
          break;
        }
    } else {
      state_.agent = target;
      if (TrapState* t = trap_at(state_.agent)) {
        t->revealed = true;
        if (!config_.lit) reveal_around(state_.agent);  // remember the trap cell
        state_.agent = sample_teleport_destination();
        info.teleported = true;
      }
    }
  }
  if (!config_.lit) reveal_around(state_.agent);

  double reward = -config_.step_penalty;
  if (state_.agent == state_.goal) {
    reward += config_.goal_reward;
    info.reached_goal = true;
    state_.done = true;
  } else {
    monster_phase(info);
    if (info.died) {
      state_.done = true;
    } else if (state_.steps >= config_.max_steps) {
      info.timed_out = true;
      state_.done = true;
    }
  }

  StepResult res;
  res.obs = render_observation();
  res.reward = reward;
  res.done = state_.done;
  res.info = info;
  return res;
}

int32_t RoomEnv::rendered_glyph(int row, int col) const {
  if (!on_canvas(row, col)) return kPad;
  const Pos p{row, col};
  if (!config_.lit && !state_.explored[idx(p)]) return kUnseen;
  if (state_.agent == p) return kAgent;
  // Current monster positions are shown only inside the explored region;
  // remembered terrain persists but remembered monsters do not.
  if (monster_at(p)) return kMonster;
  for (const auto& c : state_.corpses)
    if (c == p) return kCorpse;
  if (const TrapState* t = trap_at(p); t && t->revealed) return kTrapRevealed;
  return state_.terrain[idx(p)];
}

Observation RoomEnv::render_observation() const {
  Observation obs;
  obs.crop_size = config_.crop_size;
  const int half = config_.crop_size / 2;
  obs.crop.resize(static_cast<size_t>(config_.crop_size) * config_.crop_size);
  for (int dr = -half; dr <= half; ++dr)
    for (int dc = -half; dc <= half; ++dc) {
      const int r = state_.agent.row + dr, c = state_.agent.col + dc;
      obs.crop[(dr + half) * config_.crop_size + (dc + half)] = rendered_glyph(r, c);
    }
  if (config_.full_map) {
    obs.has_full_map = true;
    obs.full_map.resize(kCanvasRows * kCanvasCols);
    for (int r = 0; r < kCanvasRows; ++r)
      for (int c = 0; c < kCanvasCols; ++c) obs.full_map[idx(r, c)] = rendered_glyph(r, c);
  }
  return obs;
}

std::pair<int, int> RoomEnv::room_position() const {
  return {state_.agent.col - kAnchorCol, state_.agent.row - kAnchorRow};
}

std::string RoomEnv::render_text() const {
  std::string out;
  out.reserve((kCanvasCols + 1) * kCanvasRows);
  for (int r = 0; r < kCanvasRows; ++r) {
    for (int c = 0; c < kCanvasCols; ++c) out.push_back(glyph_char(rendered_glyph(r, c)));
    out.push_back('\n');
  }
  return out;
}

}  // namespace roomprobe::env
