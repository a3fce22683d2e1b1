#pragma once

#include <map>
#include <string>
#include <vector>

#include "fsce/distill.hpp"
#include "fsce/model.hpp"
#include "fsce/synth.hpp"

namespace fsce {

// Flat `key = value` run configuration. Every key has a default; unknown keys
// and malformed values are rejected with their line number.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(const std::string& text, const std::string& source = "<config>");
  static RunConfig load(const std::string& path);

  // Sets one key from text; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  // All keys in sorted order, one `key = value` line each.
  std::string echo() const;
  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const RunConfig& o) const { return values_ == o.values_; }

  // Typed views. Throw ConfigError when the stored value does not convert.
  BackboneConfig student(int num_classes) const;
  BackboneConfig teacher(int num_classes) const;
  KdConfig kd() const;
  TrainConfig train() const;
  AugmenterConfig augmenter() const;
  std::vector<std::uint64_t> seeds() const;

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // Documented keys with their defaults and one-line descriptions.
  struct KeyDoc {
    std::string key;
    // b bool, i int, u unsigned, d number, l int list, L seed list, s text
    char type;
    std::string default_value;
    std::string help;
  };
  static const std::vector<KeyDoc>& keys();

 private:
  std::map<std::string, std::string> values_;
};

// Config lines echoed into a run log (`# key = value`), parsed back.
RunConfig parse_log_echo(const std::string& log_text);

}  // namespace fsce
