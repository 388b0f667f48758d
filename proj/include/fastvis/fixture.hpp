#pragma once

// Scripted backend serving canned responses, and an instrumenting wrapper that
// counts calls and can capture live responses as a fixture file.
//
// Fixture file: a JSON object keyed by "image_ref\u0000question". A value is a
// single AdapterResponse or an array of them (at most one per role); a request
// is answered by the entry whose role matches.

#include <array>
#include <atomic>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "fastvis/adapter.hpp"

namespace fastvis {

inline std::string fixture_key(std::string_view image_ref, std::string_view question) {
  std::string key(image_ref);
  key.push_back('\0');
  key.append(question);
  return key;
}

using FixtureTable = std::map<std::string, std::vector<AdapterResponse>, std::less<>>;

inline Json encode(const FixtureTable& table) {
  Json j = Json::object();
  for (const auto& [key, responses] : table) {
    if (responses.size() == 1) {
      j[key] = encode(responses.front());
    } else {
      j[key] = encode_list(responses);
    }
  }
  return j;
}

inline FixtureTable decode_fixtures(const Json& j) {
  detail::expect_object(j, "fixtures");
  FixtureTable table;
  for (const auto& [key, value] : j.items()) {
    const std::string path = "fixtures[" + Json(key).dump() + "]";
    auto& slot = table[key];
    if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        slot.push_back(decode_response(value[i], path + "[" + std::to_string(i) + "]"));
      }
    } else {
      slot.push_back(decode_response(value, path));
    }
  }
  return table;
}

class FixtureBackend final : public Backend {
 public:
  explicit FixtureBackend(FixtureTable table) : table_(std::move(table)) {}

  AdapterResponse call(const AdapterRequest& req) override {
    auto it = table_.find(fixture_key(req.query.image_ref(), req.query.question()));
    if (it == table_.end()) {
      throw AdapterError(fmt::format("fixture: no entry for image '{}' question '{}'",
                                     req.query.image_ref(), req.query.question()));
    }
    for (const auto& resp : it->second) {
      if (resp.role == req.role) return resp;
    }
    throw AdapterError(fmt::format("fixture: no {} response for image '{}' question '{}'",
                                   to_string(req.role), req.query.image_ref(),
                                   req.query.question()));
  }

 private:
  FixtureTable table_;
};

/// Forwards to an inner backend, counting calls per role and optionally
/// recording each response into a fixture table.
class RecordingBackend final : public Backend {
 public:
  explicit RecordingBackend(Backend& inner) : inner_(inner) {}

  AdapterResponse call(const AdapterRequest& req) override {
    ++counts_[static_cast<std::size_t>(req.role)];
    AdapterResponse resp = inner_.call(req);
    std::lock_guard lock(mutex_);
    auto& slot = recorded_[fixture_key(req.query.image_ref(), req.query.question())];
    bool replaced = false;
    for (auto& r : slot) {
      if (r.role == resp.role) {
        r = resp;
        replaced = true;
      }
    }
    if (!replaced) slot.push_back(resp);
    return resp;
  }

  std::size_t calls(AdapterRole role) const { return counts_[static_cast<std::size_t>(role)]; }

  std::size_t total_calls() const {
    std::size_t n = 0;
    for (const auto& c : counts_) n += c;
    return n;
  }

  void reset_counts() {
    for (auto& c : counts_) c = 0;
  }

  FixtureTable fixtures() const {
    std::lock_guard lock(mutex_);
    return recorded_;
  }

 private:
  Backend& inner_;
  std::array<std::atomic<std::size_t>, std::size(kAllRoles)> counts_{};
  mutable std::mutex mutex_;
  FixtureTable recorded_;
};

}  // namespace fastvis
