#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>

#include <json.hpp>

namespace rolealign::cli {

inline constexpr const char* kToolName = "rolealign";
inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_file(const std::filesystem::path& path);

// Record of one command run: enough to repeat it, plus what it produced.
class Manifest {
 public:
  explicit Manifest(std::string command);

  void set_config(nlohmann::ordered_json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::string& name) { outputs_.push_back(name); }
  void warn(const std::string& message) { warnings_.push_back(message); }
  void set(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }

  template <class F>
  decltype(auto) timed(const std::string& stage, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    struct Stop {
      Manifest* m;
      std::string stage;
      std::chrono::steady_clock::time_point start;
      ~Stop() {
        m->timings_[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
    } stop{this, stage, start};
    return fn();
  }

  const nlohmann::ordered_json& warnings() const { return warnings_; }
  nlohmann::ordered_json to_json() const;
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  std::uint64_t seed_ = 0;
  nlohmann::ordered_json inputs_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json warnings_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json timings_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

}  // namespace rolealign::cli
