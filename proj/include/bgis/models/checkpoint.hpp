#pragma once

#include <string>

#include "json.hpp"

#include "bgis/models/denoiser.hpp"
#include "bgis/models/trajectory.hpp"

namespace bgis::models {

// Checkpoints are single JSON documents: kind, data scale, geometry, the
// core's architecture descriptor, flattened parameters, and free-form
// metadata (training provenance).  Doubles survive round-trips exactly.
nlohmann::json checkpoint_json(const NetDenoiser& model, const nlohmann::json& meta);
nlohmann::json checkpoint_json(const BctmModel& model, const nlohmann::json& meta);

void save_denoiser(const NetDenoiser& model, const std::string& path,
                   const nlohmann::json& meta = nlohmann::json::object());
void save_trajectory(const BctmModel& model, const std::string& path,
                     const nlohmann::json& meta = nlohmann::json::object());

NetDenoiser denoiser_from_json(const nlohmann::json& doc);
BctmModel trajectory_from_json(const nlohmann::json& doc);

NetDenoiser load_denoiser(const std::string& path);
BctmModel load_trajectory(const std::string& path);

// Metadata block of a saved checkpoint (for reports).
nlohmann::json checkpoint_meta(const std::string& path);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& doc, const std::string& path);

}  // namespace bgis::models
