#include "telemetry.hpp"

#include "errors.hpp"

namespace retarget {

TelemetryWriter::TelemetryWriter(const std::filesystem::path& path, bool append)
    : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw IoError("cannot open telemetry log " + path.string());
}

void TelemetryWriter::write(const nlohmann::json& record) {
  out_ << record_line(record) << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing telemetry log " + path_.string());
}

std::string record_line(const nlohmann::json& record) { return record.dump(); }

}  // namespace retarget
