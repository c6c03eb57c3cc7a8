#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixgen/model.hpp"
#include "mixgen/sampler.hpp"
#include "mixgen/trainer.hpp"

namespace mixgen {

// Everything one CLI run needs. The file form is TOML with sections
// [backbone] [head] [loss] [train] [sample] [data] plus top-level seed and
// out_dir; every key `section.name` is mirrored by a flag --section.name.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SampleConfig sample;
    std::vector<std::filesystem::path> data;  // training JSONL files
    std::vector<int> multipliers;             // per file, default 1
    std::filesystem::path out_dir = "run";
    std::int64_t checkpoint_every = 0;  // 0: final checkpoint only
    std::int64_t log_every = 1;
    std::uint64_t seed = 0;  // copied into train.seed and sample.seed
};

// Dotted names of every configurable key, in file order.
std::vector<std::string> run_config_keys();

// Throws InvalidConfig listing every bad key or value.
RunConfig parse_run_config(const std::string& toml_text);
RunConfig load_run_config(const std::filesystem::path& path);
// Applies "key=value" overrides on top of `cfg`; throws InvalidConfig.
void apply_overrides(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& overrides);

// Lists every problem at once in an InvalidConfig. `need_data` also checks
// that the data files exist.
void validate(const RunConfig& cfg, bool need_data);

nlohmann::json to_json(const RunConfig& cfg);
// CRC32 of the canonical JSON form without sample.jobs, as 8 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace mixgen
