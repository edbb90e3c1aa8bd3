#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "rga/attack.hpp"
#include "rga/metrics.hpp"
#include "rga/victim.hpp"

namespace rga::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Method { RGA, MIM, DIM, Noise };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct VictimSpec {
  std::string kind = "toy";  ///< toy | oracle
  std::uint64_t seed = 0;
  Index min_area = 16;
  std::string command;       ///< oracle: shell command of the sidecar
  int timeout_ms = 30000;
  /// oracle: a toy segmenter with this seed answers segment_* calls.
  std::optional<std::uint64_t> segmenter_seed;
};

struct SweepSpec {
  std::string parameter;  ///< epsilon | T | gamma | n_dilate
  std::vector<double> values;
};

struct RunConfig {
  std::vector<fs::path> inputs;     ///< PNG files or directories of them
  fs::path output_dir = "rga-out";
  fs::path adversarial_dir;         ///< evaluate: where <stem>.adv.png live; defaults to output_dir
  Method method = Method::RGA;
  bool use_rgm = true;              ///< MIM and DIM only
  bool quantize = true;
  AttackConfig attack;
  VictimSpec victim;
  std::vector<fs::path> sample_pool;
  std::optional<SweepSpec> sweep;

  /// Throws ConfigError.
  void validate() const;
};

/// Relative paths inside `j` resolve against `base`.
RunConfig config_from_json(const json& j, const fs::path& base = {});
json config_to_json(const RunConfig& cfg);
RunConfig load_config(const fs::path& path);

/// Directories expand to their *.png files; result sorted, duplicates kept
/// out.
std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs);

std::shared_ptr<const VictimModel> make_victim(const VictimSpec& spec);

/// Seeds for image `index` of a batch.
AttackConfig per_image_config(const AttackConfig& base, std::size_t index);

AttackResult run_method(const VictimModel& victim, const Image& x, const AttackConfig& cfg, Method method,
                        bool use_rgm, const std::vector<Image>* sample_pool = nullptr);

/// Pads to multiples of 4, attacks, crops back and (optionally) quantizes.
/// The returned delta is adversarial - x after cropping.
AttackResult attack_image(const VictimModel& victim, const Image& x, const AttackConfig& cfg, Method method,
                          bool use_rgm, bool quantize, const std::vector<Image>* sample_pool = nullptr);

/// evaluate_attack on reflect-padded copies of both images.
EvalRecord evaluate_image(const VictimModel& victim, const Image& clean, const Image& adversarial);

json to_json(const EvalRecord& r);

/// min(available cores, RGA_FORGE_THREADS, jobs), at least 1.
unsigned thread_count(std::size_t jobs);

/// Commands return the number of per-file errors; messages go to `log`.
int cmd_rgm(const RunConfig& cfg, std::ostream& log);
int cmd_attack(const RunConfig& cfg, std::ostream& log);
int cmd_evaluate(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, std::ostream& log);
/// Writes the built-in fixture suite as PNGs.
int cmd_fixtures(const fs::path& out_dir, std::ostream& log);

/// Process entry point; returns the exit code.
int main_entry(int argc, char** argv);

}  // namespace rga::cli
