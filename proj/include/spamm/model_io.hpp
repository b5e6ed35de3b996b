#pragma once

#include "spamm/types.hpp"

#include <filesystem>
#include <string>

#include <json.hpp>

namespace spamm {

nlohmann::json model_to_json(const SparseMixtureModel& model);
/// Throws ContractError on schema violations and DomainError on invalid
/// parameters.
SparseMixtureModel model_from_json(const nlohmann::json& j);

std::string dump_model(const SparseMixtureModel& model);
void save_model(const SparseMixtureModel& model, const std::filesystem::path& path);
SparseMixtureModel load_model(const std::filesystem::path& path);

/// Write via a temporary file in the same directory and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace spamm
