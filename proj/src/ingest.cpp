#include "rolealign/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rolealign/errors.hpp"

namespace rolealign {

std::string to_string(AttackDirection d) {
  return d == AttackDirection::LeftToRight ? "LeftToRight" : "RightToLeft";
}

AttackDirection attack_direction_from_string(const std::string& s) {
  if (s == "LeftToRight") return AttackDirection::LeftToRight;
  if (s == "RightToLeft") return AttackDirection::RightToLeft;
  throw InputError("unknown attack_direction '" + s + "' (expected LeftToRight or RightToLeft)");
}

TrackingFormat tracking_format_from_string(const std::string& s) {
  if (s == "csv") return TrackingFormat::Csv;
  if (s == "jsonl") return TrackingFormat::Jsonl;
  throw InputError("unknown format '" + s + "' (expected csv or jsonl)");
}

IncompleteFramePolicy incomplete_policy_from_string(const std::string& s) {
  if (s == "reject") return IncompleteFramePolicy::Reject;
  if (s == "drop-frames") return IncompleteFramePolicy::DropFrames;
  if (s == "drop-agents") return IncompleteFramePolicy::DropAgents;
  if (s == "keep") return IncompleteFramePolicy::Keep;
  throw InputError("unknown incomplete-frame policy '" + s + "'");
}

std::size_t Dataset::point_count() const {
  return std::accumulate(frames.begin(), frames.end(), std::size_t{0},
                         [](std::size_t acc, const Frame& f) { return acc + f.positions.size(); });
}

bool Dataset::complete() const {
  return std::all_of(frames.begin(), frames.end(),
                     [&](const Frame& f) { return f.agent_ids == agent_ids; });
}

void Dataset::refresh_agents() {
  std::set<std::string> ids;
  for (const auto& f : frames) ids.insert(f.agent_ids.begin(), f.agent_ids.end());
  agent_ids.assign(ids.begin(), ids.end());
}

namespace {

struct PendingAgent {
  std::string id;
  Vec2 position;
};

struct PendingFrame {
  std::size_t line = 0;  // first line that mentioned the frame
  bool is_event = false;
  AttackDirection direction = AttackDirection::LeftToRight;
  FrameContext context;
  std::vector<PendingAgent> agents;
};

double parse_double(std::string_view s, std::size_t line, const char* column) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError(std::string("non-numeric ") + column + " '" + std::string(s) + "'", line);
  }
  return v;
}

std::int64_t parse_int(std::string_view s, std::size_t line, const char* column) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(std::string("non-integer ") + column + " '" + std::string(s) + "'", line);
  }
  return v;
}

bool parse_bool(std::string_view s, std::size_t line) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw ParseError("is_event must be 0/1/true/false, got '" + std::string(s) + "'", line);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

void merge_frame_fields(PendingFrame& f, bool fresh, std::int64_t id, bool is_event,
                        AttackDirection dir, const FrameContext& ctx, std::size_t line) {
  if (fresh) {
    f.line = line;
    f.is_event = is_event;
    f.direction = dir;
    f.context = ctx;
    return;
  }
  if (f.is_event != is_event || f.direction != dir || !(f.context == ctx)) {
    throw ParseError("frame " + std::to_string(id) +
                         " has inconsistent is_event/attack_direction/team/game/period across rows",
                     line);
  }
}

void add_agent(PendingFrame& f, std::int64_t id, std::string agent, const Vec2& pos,
               std::size_t line) {
  for (const auto& a : f.agents) {
    if (a.id == agent) {
      throw ParseError("duplicate agent '" + agent + "' in frame " + std::to_string(id), line);
    }
  }
  f.agents.push_back({std::move(agent), pos});
}

std::map<std::int64_t, PendingFrame> read_csv(std::istream& in) {
  static const std::vector<std::string> kColumns = {
      "frame_id", "agent_id", "x", "y", "is_event", "attack_direction", "team", "game", "period"};
  std::string text;
  std::size_t line_no = 0;
  if (!std::getline(in, text)) throw ParseError("empty input: header required", 1);
  ++line_no;
  if (!text.empty() && text.back() == '\r') text.pop_back();
  const auto header = split_commas(text);
  std::vector<int> column_of(kColumns.size(), -1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto it = std::find(kColumns.begin(), kColumns.end(), header[c]);
    if (it == kColumns.end()) {
      throw ParseError("unexpected column '" + std::string(header[c]) + "'", line_no);
    }
    auto& slot = column_of[static_cast<std::size_t>(it - kColumns.begin())];
    if (slot >= 0) throw ParseError("duplicate column '" + std::string(header[c]) + "'", line_no);
    slot = static_cast<int>(c);
  }
  for (std::size_t k = 0; k < kColumns.size(); ++k) {
    if (column_of[k] < 0) throw ParseError("missing column '" + kColumns[k] + "'", line_no);
  }

  std::map<std::int64_t, PendingFrame> frames;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    const auto cells = split_commas(text);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(cells.size()),
                       line_no);
    }
    auto cell = [&](std::size_t k) { return cells[static_cast<std::size_t>(column_of[k])]; };
    const auto id = parse_int(cell(0), line_no, "frame_id");
    std::string agent(cell(1));
    if (agent.empty()) throw ParseError("empty agent_id", line_no);
    const Vec2 pos(parse_double(cell(2), line_no, "x"), parse_double(cell(3), line_no, "y"));
    const bool is_event = parse_bool(cell(4), line_no);
    AttackDirection dir;
    try {
      dir = attack_direction_from_string(std::string(cell(5)));
    } catch (const InputError& e) {
      throw ParseError(e.what(), line_no);
    }
    const FrameContext ctx{std::string(cell(6)), std::string(cell(7)), std::string(cell(8))};
    const bool fresh = !frames.contains(id);
    auto& f = frames[id];
    merge_frame_fields(f, fresh, id, is_event, dir, ctx, line_no);
    add_agent(f, id, std::move(agent), pos, line_no);
  }
  return frames;
}

std::map<std::int64_t, PendingFrame> read_jsonl(std::istream& in) {
  std::map<std::int64_t, PendingFrame> frames;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    try {
      if (!j.is_object()) throw ParseError("expected a frame object", line_no);
      if (!j.contains("frame_id")) throw ParseError("missing field 'frame_id'", line_no);
      if (!j.contains("positions")) throw ParseError("missing field 'positions'", line_no);
      const auto id = j.at("frame_id").get<std::int64_t>();
      if (frames.contains(id)) {
        throw ParseError("duplicate frame_id " + std::to_string(id), line_no);
      }
      auto& f = frames[id];
      FrameContext ctx{j.value("team", std::string()), j.value("game", std::string()),
                       j.value("period", std::string())};
      const auto dir =
          attack_direction_from_string(j.value("attack_direction", std::string("LeftToRight")));
      merge_frame_fields(f, true, id, j.value("is_event", false), dir, ctx, line_no);
      for (const auto& p : j.at("positions")) {
        for (const char* key : {"agent_id", "x", "y"}) {
          if (!p.contains(key)) throw ParseError(std::string("position missing '") + key + "'", line_no);
        }
        if (!p.at("x").is_number() || !p.at("y").is_number()) {
          throw ParseError("non-numeric position", line_no);
        }
        const Vec2 pos(p.at("x").get<double>(), p.at("y").get<double>());
        if (!pos.allFinite()) throw ParseError("non-finite position", line_no);
        std::string agent = p.at("agent_id").is_string() ? p.at("agent_id").get<std::string>()
                                                         : p.at("agent_id").dump();
        add_agent(f, id, std::move(agent), pos, line_no);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(e.what(), line_no);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return frames;
}

Dataset assemble(std::map<std::int64_t, PendingFrame> pending, IncompleteFramePolicy policy) {
  Dataset ds;
  ds.frames.reserve(pending.size());
  for (auto& [id, p] : pending) {
    std::sort(p.agents.begin(), p.agents.end(),
              [](const PendingAgent& a, const PendingAgent& b) { return a.id < b.id; });
    Frame f;
    f.frame_id = id;
    f.is_event = p.is_event;
    f.attack_direction = p.direction;
    f.context = std::move(p.context);
    for (auto& a : p.agents) {
      f.agent_ids.push_back(std::move(a.id));
      f.positions.push_back(a.position);
    }
    ds.frames.push_back(std::move(f));
  }
  if (ds.frames.empty()) throw ParseError("no frames in input", 0);
  ds.refresh_agents();
  if (ds.complete()) return ds;

  switch (policy) {
    case IncompleteFramePolicy::Reject:
      for (const auto& f : ds.frames) {
        if (f.agent_ids == ds.agent_ids) continue;
        std::string missing;
        for (const auto& a : ds.agent_ids) {
          if (!std::binary_search(f.agent_ids.begin(), f.agent_ids.end(), a)) {
            missing += (missing.empty() ? "" : ", ") + a;
          }
        }
        throw ParseError("frame " + std::to_string(f.frame_id) + " is missing agent(s) " + missing,
                         pending.at(f.frame_id).line);
      }
      break;
    case IncompleteFramePolicy::DropFrames:
      std::erase_if(ds.frames, [&](const Frame& f) { return f.agent_ids != ds.agent_ids; });
      if (ds.frames.empty()) throw EmptySelectionError("every frame is missing some agent");
      break;
    case IncompleteFramePolicy::DropAgents: {
      std::vector<std::string> keep;
      for (const auto& a : ds.agent_ids) {
        if (std::all_of(ds.frames.begin(), ds.frames.end(), [&](const Frame& f) {
              return std::binary_search(f.agent_ids.begin(), f.agent_ids.end(), a);
            })) {
          keep.push_back(a);
        }
      }
      if (keep.empty()) throw EmptySelectionError("no agent is present in every frame");
      for (auto& f : ds.frames) {
        Frame g = f;
        g.agent_ids.clear();
        g.positions.clear();
        for (std::size_t i = 0; i < f.agent_ids.size(); ++i) {
          if (std::binary_search(keep.begin(), keep.end(), f.agent_ids[i])) {
            g.agent_ids.push_back(f.agent_ids[i]);
            g.positions.push_back(f.positions[i]);
          }
        }
        f = std::move(g);
      }
      ds.agent_ids = std::move(keep);
      break;
    }
    case IncompleteFramePolicy::Keep:
      break;
  }
  return ds;
}

void write_number(std::ostream& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

}  // namespace

Dataset parse_tracking(std::istream& in, const ParseOptions& options) {
  auto pending = options.format == TrackingFormat::Csv ? read_csv(in) : read_jsonl(in);
  return assemble(std::move(pending), options.incomplete);
}

Dataset read_tracking(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open input file '" + path.string() + "'");
  return parse_tracking(in, options);
}

void write_tracking_csv(std::ostream& out, const Dataset& ds) {
  out << "frame_id,agent_id,x,y,is_event,attack_direction,team,game,period\n";
  for (const auto& f : ds.frames) {
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      out << f.frame_id << ',' << f.agent_ids[i] << ',';
      write_number(out, f.positions[i].x());
      out << ',';
      write_number(out, f.positions[i].y());
      out << ',' << (f.is_event ? 1 : 0) << ',' << to_string(f.attack_direction) << ','
          << f.context.team << ',' << f.context.game << ',' << f.context.period << '\n';
    }
  }
}

void write_tracking_jsonl(std::ostream& out, const Dataset& ds) {
  for (const auto& f : ds.frames) {
    nlohmann::json j;
    j["frame_id"] = f.frame_id;
    j["is_event"] = f.is_event;
    j["attack_direction"] = to_string(f.attack_direction);
    j["team"] = f.context.team;
    j["game"] = f.context.game;
    j["period"] = f.context.period;
    auto& pos = j["positions"] = nlohmann::json::array();
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      pos.push_back({{"agent_id", f.agent_ids[i]},
                     {"x", f.positions[i].x()},
                     {"y", f.positions[i].y()}});
    }
    out << j.dump() << '\n';
  }
}

Dataset normalize_attack_direction(Dataset ds) {
  for (auto& f : ds.frames) {
    if (f.attack_direction == AttackDirection::RightToLeft) {
      for (auto& p : f.positions) p = -p;
      f.attack_direction = AttackDirection::LeftToRight;
    }
  }
  return ds;
}

Dataset center_normalize(Dataset ds) {
  for (auto& f : ds.frames) {
    if (f.positions.empty()) continue;
    Vec2 mean = Vec2::Zero();
    for (const auto& p : f.positions) mean += p;
    mean /= static_cast<double>(f.positions.size());
    for (auto& p : f.positions) p -= mean;
  }
  return ds;
}

Dataset filter_frames(Dataset ds, const std::function<bool(const Frame&)>& pred,
                      const std::string& what) {
  std::erase_if(ds.frames, [&](const Frame& f) { return !pred(f); });
  if (ds.frames.empty()) throw EmptySelectionError("no frames match " + what);
  ds.refresh_agents();
  return ds;
}

Dataset filter_key_frames(Dataset ds) {
  return filter_frames(std::move(ds), [](const Frame& f) { return f.is_event; }, "is_event");
}

Dataset prepare(Dataset ds, bool key_frames_only) {
  ds = center_normalize(normalize_attack_direction(std::move(ds)));
  return key_frames_only ? filter_key_frames(std::move(ds)) : ds;
}

FlatPoints flatten(const Dataset& ds) {
  FlatPoints flat;
  flat.frames = ds.frames.size();
  flat.agents = ds.complete() ? ds.agent_count() : 0;
  flat.points.reserve(ds.point_count());
  for (const auto& f : ds.frames) {
    flat.points.insert(flat.points.end(), f.positions.begin(), f.positions.end());
  }
  return flat;
}

Dataset unflatten(const FlatPoints& flat, const Dataset& shape) {
  if (flat.points.size() != shape.point_count() || flat.frames != shape.frames.size()) {
    throw InputError("unflatten: point count does not match the dataset shape");
  }
  Dataset out = shape;
  std::size_t row = 0;
  for (auto& f : out.frames) {
    for (auto& p : f.positions) p = flat.points[row++];
  }
  return out;
}

}  // namespace rolealign
