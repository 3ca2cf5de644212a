#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rolealign/geometry.hpp"

namespace rolealign {

enum class AttackDirection { LeftToRight, RightToLeft };

std::string to_string(AttackDirection d);
AttackDirection attack_direction_from_string(const std::string& s);

// Team / game / period labels carried by every frame for context filtering.
struct FrameContext {
  std::string team;
  std::string game;
  std::string period;
  bool operator==(const FrameContext&) const = default;
};

// One snapshot of N agents. agent_ids are sorted and distinct; positions[i]
// belongs to agent_ids[i]. Units are meters, pitch centre at the origin.
struct Frame {
  std::int64_t frame_id = 0;
  std::vector<Vec2> positions;
  std::vector<std::string> agent_ids;
  bool is_event = false;
  AttackDirection attack_direction = AttackDirection::LeftToRight;
  FrameContext context;

  bool operator==(const Frame&) const = default;
};

// Frames in ascending frame_id order. agent_ids is the sorted union over all
// frames; when complete() every frame carries exactly those agents.
struct Dataset {
  std::vector<Frame> frames;
  std::vector<std::string> agent_ids;

  std::size_t frame_count() const { return frames.size(); }
  std::size_t agent_count() const { return agent_ids.size(); }
  std::size_t point_count() const;
  bool complete() const;

  // Re-derives agent_ids from the frames.
  void refresh_agents();

  bool operator==(const Dataset&) const = default;
};

enum class TrackingFormat { Csv, Jsonl };

TrackingFormat tracking_format_from_string(const std::string& s);

// How to treat frames that lack some of the dataset's agents (send-offs,
// tracking dropouts).
enum class IncompleteFramePolicy {
  Reject,      // parse error naming the frame
  DropFrames,  // discard incomplete frames
  DropAgents,  // discard agents absent from any frame
  Keep,        // keep as-is; role assignment goes rectangular
};

IncompleteFramePolicy incomplete_policy_from_string(const std::string& s);

struct ParseOptions {
  TrackingFormat format = TrackingFormat::Csv;
  IncompleteFramePolicy incomplete = IncompleteFramePolicy::Reject;
};

// CSV header: frame_id,agent_id,x,y,is_event,attack_direction,team,game,period
// JSONL: one frame object per line, see docs/formats.md.
Dataset parse_tracking(std::istream& in, const ParseOptions& options = {});
Dataset read_tracking(const std::filesystem::path& path, const ParseOptions& options);

void write_tracking_csv(std::ostream& out, const Dataset& ds);
void write_tracking_jsonl(std::ostream& out, const Dataset& ds);

// Point reflection through the origin for RightToLeft frames; all frames end
// up LeftToRight.
Dataset normalize_attack_direction(Dataset ds);

// Subtracts each frame's mean agent position.
Dataset center_normalize(Dataset ds);

// Keeps event frames in order. Throws EmptySelectionError if there are none.
Dataset filter_key_frames(Dataset ds);

// Keeps frames satisfying pred. Throws EmptySelectionError naming `what`.
Dataset filter_frames(Dataset ds, const std::function<bool(const Frame&)>& pred,
                      const std::string& what);

// normalize_attack_direction then center_normalize, then optionally key frames.
Dataset prepare(Dataset ds, bool key_frames_only = false);

// (S*N) x 2 points, frame-major: row s*N + n is agent n of frame s.
struct FlatPoints {
  std::vector<Vec2> points;
  std::size_t frames = 0;
  std::size_t agents = 0;  // per frame when the source was complete, else 0
};

FlatPoints flatten(const Dataset& ds);

// Inverse of flatten: positions from `flat`, everything else from `shape`.
Dataset unflatten(const FlatPoints& flat, const Dataset& shape);

}  // namespace rolealign
