#include <sstream>

#include <fmt/format.h>

#include "peerfb/service.hpp"

namespace peerfb {

using nlohmann::json;

json to_json(const EventRecord& e) {
  return {{"seq", e.seq}, {"at", format_timestamp(e.at)}, {"actor", e.actor}, {"type", e.type},
          {"data", e.data}};
}

EventRecord event_from_json(const json& j) {
  EventRecord e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.at = parse_timestamp(j.at("at").get<std::string>());
  e.actor = j.at("actor").get<std::string>();
  e.type = j.at("type").get<std::string>();
  e.data = j.value("data", json::object());
  return e;
}

void MemoryEventStore::append(const EventRecord& e) {
  std::lock_guard lock(mu_);
  events_.push_back(e);
}

std::vector<EventRecord> MemoryEventStore::load() const {
  std::lock_guard lock(mu_);
  return events_;
}

FileEventStore::FileEventStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(Errc::unavailable, fmt::format("cannot open event log {}", path_.string()));
}

void FileEventStore::append(const EventRecord& e) {
  std::lock_guard lock(mu_);
  out_ << to_json(e).dump() << '\n';
  out_.flush();
  if (!out_) throw Error(Errc::unavailable, "event log write failed");
}

std::vector<EventRecord> FileEventStore::load() const {
  std::lock_guard lock(mu_);
  std::ifstream in(path_);
  std::vector<EventRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw Error(Errc::invalid_argument, fmt::format("event log line {}: {}", n, ex.what()));
    }
  }
  return out;
}

std::string serialize_events(const std::vector<EventRecord>& events) {
  std::string out;
  for (const auto& e : events) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

}  // namespace peerfb
