#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixgen/seqformat.hpp"

namespace mixgen {

struct RecordJsonOptions {
    // Condition values in JSON are raw property values; records hold the
    // signed-log transformed value.
    bool raw_conditions = true;
    // Docking coordinates in JSON are Angstrom; records hold them scaled.
    bool scale_docking = true;
};

// Throws BadSpec for schema problems (missing fields, wrong types).
DomainRecord record_from_json(const nlohmann::json& j, const RecordJsonOptions& opt = {});
nlohmann::json record_to_json(const DomainRecord& record, const RecordJsonOptions& opt = {});

nlohmann::json sequence_to_json(const MixedSequence& seq, const Vocabulary& vocab);
MixedSequence sequence_from_json(const nlohmann::json& j);

// One JSON document per non-empty line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace mixgen
