#pragma once

// Line-delimited JSON records. Every record carries "schema" and "kind";
// training steps use kind "train_step", evaluation rows "patch_metrics".

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace retarget {

inline constexpr const char* kRecordSchema = "retarget.telemetry/1";

class TelemetryWriter {
 public:
  TelemetryWriter(const std::filesystem::path& path, bool append);
  void write(const nlohmann::json& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Serializes one record as a single line (no trailing newline).
std::string record_line(const nlohmann::json& record);

}  // namespace retarget
