#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehrtraj/record.hpp"
#include "ehrtraj/timestep.hpp"

namespace ehrtraj {

inline constexpr int kRecordSchemaVersion = 1;

using Json = nlohmann::json;

Json to_json(const PatientRecord& record);
PatientRecord record_from_json(const Json& j);

Json to_json(const TimestepOutput& out);
TimestepOutput output_from_json(const Json& j);

Json value_to_json(const FeatureValue& v);
FeatureValue value_from_json(FeatureKind kind, const Json& j);

/// One record per line. Every line carries "schema_version".
void write_cohort(const std::filesystem::path& path, const std::vector<PatientRecord>& records);
std::string cohort_to_string(const std::vector<PatientRecord>& records);
std::vector<PatientRecord> read_cohort(const std::filesystem::path& path);
std::vector<PatientRecord> cohort_from_string(const std::string& text);

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

}  // namespace ehrtraj
