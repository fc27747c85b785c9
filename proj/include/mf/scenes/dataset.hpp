#pragma once

#include <string>
#include <vector>

#include "mf/autodiff/records.hpp"
#include "mf/scenes/scene.hpp"

namespace mf::scenes {

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<ArrayRecord> sample_to_records(const SceneSample& s);
SceneSample sample_from_records(const std::vector<ArrayRecord>& records);

/// MFDS: magic "MFDS", version u32, sample count u64, then per sample a u32 record
/// count followed by named-array records.
void write_dataset(const std::vector<SceneSample>& samples, const std::string& path);
std::vector<SceneSample> read_dataset(const std::string& path);

/// Generic form used for prediction dumps and route logs.
void write_record_sets(const std::vector<std::vector<ArrayRecord>>& sets, const std::string& path);
std::vector<std::vector<ArrayRecord>> read_record_sets(const std::string& path);

}  // namespace mf::scenes
