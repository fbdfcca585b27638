#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "roomprobe/nn/rng.hpp"

namespace roomprobe::env {

/// Glyph ids, one per renderable entity kind. Hidden traps are never
/// rendered; they show as floor until triggered.
enum Glyph : int32_t {
  kFloor = 0,
  kWall = 1,
  kAgent = 2,
  kStairUp = 3,
  kStairDown = 4,
  kMonster = 5,
  kCorpse = 6,
  kTrapRevealed = 7,
  kUnseen = 8,
  kPad = 9,
};
inline constexpr int kGlyphVocab = 10;

/// One printable char per glyph, for the debug renderer.
char glyph_char(int32_t g);

enum class RoomKind { kRandom, kMonster, kTrap, kUltimate };
enum class ActionSet { kCardinal4, kCardinal8 };

std::string room_kind_name(RoomKind k);
std::optional<RoomKind> parse_room_kind(const std::string& s);

/// Canvas geometry: the 15x15 interior sits on a 21x79 canvas with its
/// top-left interior cell at (row 3, col 32), ringed by one wall cell.
inline constexpr int kCanvasRows = 21;
inline constexpr int kCanvasCols = 79;
inline constexpr int kInterior = 15;
inline constexpr int kAnchorRow = 3;
inline constexpr int kAnchorCol = 32;

struct RoomConfig {
  RoomKind kind = RoomKind::kRandom;
  int n_monsters = 0;
  int n_traps = 0;
  bool lit = true;
  int max_steps = 300;
  double step_penalty = 0.001;
  double goal_reward = 1.0;
  ActionSet action_set = ActionSet::kCardinal8;
  int crop_size = 9;
  bool full_map = false;          // include the whole canvas in observations
  double monster_kill_prob = 1.0 / 3.0;  // chance an adjacent monster's attack kills

  /// Per-kind defaults: monster adds 3 monsters, trap adds 15 teleport
  /// traps, ultimate has both and is unlit.
  static RoomConfig for_kind(RoomKind kind);

  int n_actions() const { return action_set == ActionSet::kCardinal4 ? 4 : 8; }
};

struct Pos {
  int row = 0;
  int col = 0;
  bool operator==(const Pos&) const = default;
};

struct MonsterState {
  Pos pos;
  bool alive = true;
  bool operator==(const MonsterState&) const = default;
};

struct TrapState {
  Pos pos;
  bool revealed = false;
  bool operator==(const TrapState&) const = default;
};

/// Complete simulator state. Copyable and equality-comparable so tests can
/// assert byte-level determinism.
struct EnvState {
  std::array<int32_t, kCanvasRows * kCanvasCols> terrain{};  // floor/wall/stairs/unseen
  Pos agent;
  Pos goal;
  Pos start;
  std::vector<MonsterState> monsters;
  std::vector<TrapState> traps;
  std::vector<Pos> corpses;
  std::array<uint8_t, kCanvasRows * kCanvasCols> explored{};
  int steps = 0;
  bool done = false;
  nn::Rng rng{0};

  bool operator==(const EnvState&) const = default;
};

struct Observation {
  int crop_size = 0;
  std::vector<int32_t> crop;          // crop_size x crop_size, agent-centred
  bool has_full_map = false;
  std::vector<int32_t> full_map;      // kCanvasRows x kCanvasCols when present
};

struct StepInfo {
  bool reached_goal = false;
  bool died = false;
  bool timed_out = false;
  bool teleported = false;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Action direction offsets, index order N, E, S, W, NE, SE, SW, NW.
Pos action_delta(int action);

class RoomEnv {
 public:
  explicit RoomEnv(RoomConfig config);

  /// Builds the room and places all entities uniformly at random on
  /// distinct free floor cells. Same (config, seed) gives identical state.
  Observation reset(uint64_t seed);

  /// Advances one step. Errors if the episode is already done or the
  /// action is outside the configured action set.
  StepResult step(int action);

  Observation render_observation() const;

  /// Agent position relative to the interior's top-left, as (x, y) =
  /// (column offset, row offset), each in 0..14.
  std::pair<int, int> room_position() const;

  /// Uniform draw over teleport destinations (floor cells with no trap and
  /// no living monster). Exposed for distribution tests; advances the
  /// state's RNG.
  Pos sample_teleport_destination();

  /// One char per cell; fog-of-war applied the same way observations are.
  std::string render_text() const;

  const RoomConfig& config() const { return config_; }
  const EnvState& state() const { return state_; }
  bool done() const { return state_.done; }

  /// Test hook: crafted scenarios (exact monster placement, Monte Carlo
  /// combat trials) mutate the state directly.
  EnvState& mutable_state_for_testing() { return state_; }

 private:
  int32_t rendered_glyph(int row, int col) const;
  void reveal_around(Pos p);
  bool in_room(Pos p) const;
  bool is_floor_terrain(Pos p) const;  // floor only, stairs excluded
  bool monster_at(Pos p) const;
  const TrapState* trap_at(Pos p) const;
  TrapState* trap_at(Pos p);
  void monster_phase(StepInfo& info);

  RoomConfig config_;
  EnvState state_;
};

}  // namespace roomprobe::env
