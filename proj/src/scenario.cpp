#include "cnmm/scenario.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

namespace cnmm {

using nlohmann::json;

namespace {

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Typed, pointer-aware access to one JSON object.
class Fields {
 public:
  Fields(const json& j, std::string pointer, std::set<std::string> allowed)
      : j_(j), ptr_(std::move(pointer)) {
    if (!j_.is_object()) throw ScenarioError(ptr_, "expected an object");
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.contains(key)) {
        throw ScenarioError(at(key), fmt::format("unknown field '{}'", key));
      }
    }
  }

  std::string at(const std::string& key) const { return ptr_ + "/" + escape_token(key); }
  bool has(const std::string& key) const { return j_.contains(key) && !j_[key].is_null(); }
  const json& raw(const std::string& key) const { return j_[key]; }

  std::uint64_t u64(const std::string& key) const {
    require(key);
    const auto& v = j_[key];
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0)) {
      throw ScenarioError(at(key), fmt::format("'{}' must be a non-negative integer", key));
    }
    return v.get<std::uint64_t>();
  }
  std::uint64_t u64(const std::string& key, std::uint64_t def) const {
    return has(key) ? u64(key) : def;
  }

  std::int64_t i64(const std::string& key) const {
    require(key);
    const auto& v = j_[key];
    if (!v.is_number_integer() ||
        (v.is_number_unsigned() && v.get<std::uint64_t>() >
                                       static_cast<std::uint64_t>(INT64_MAX))) {
      throw ScenarioError(at(key), fmt::format("'{}' must be an integer", key));
    }
    return v.get<std::int64_t>();
  }

  double number(const std::string& key, double def) const {
    if (!has(key)) return def;
    if (!j_[key].is_number()) {
      throw ScenarioError(at(key), fmt::format("'{}' must be a number", key));
    }
    return j_[key].get<double>();
  }

  bool boolean(const std::string& key, bool def) const {
    if (!has(key)) return def;
    if (!j_[key].is_boolean()) {
      throw ScenarioError(at(key), fmt::format("'{}' must be true or false", key));
    }
    return j_[key].get<bool>();
  }

  std::string text(const std::string& key) const {
    require(key);
    if (!j_[key].is_string()) {
      throw ScenarioError(at(key), fmt::format("'{}' must be a string", key));
    }
    return j_[key].get<std::string>();
  }
  std::string text(const std::string& key, const std::string& def) const {
    return has(key) ? text(key) : def;
  }

  const json& array(const std::string& key) const {
    static const json empty = json::array();
    if (!has(key)) return empty;
    if (!j_[key].is_array()) {
      throw ScenarioError(at(key), fmt::format("'{}' must be an array", key));
    }
    return j_[key];
  }

  void require(const std::string& key) const {
    if (!has(key)) throw ScenarioError(ptr_.empty() ? "" : ptr_, fmt::format("missing '{}'", key));
  }

 private:
  const json& j_;
  std::string ptr_;
};

const json& object_or_empty(const json& doc, const std::string& key) {
  static const json empty = json::object();
  return doc.contains(key) && !doc[key].is_null() ? doc[key] : empty;
}

Bytes parse_hex(const std::string& hex, const std::string& pointer) {
  if (hex.size() % 2 != 0) throw ScenarioError(pointer, "hex string has odd length");
  Bytes out;
  out.reserve(hex.size() / 2);
  auto nibble = [&](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw ScenarioError(pointer, fmt::format("'{}' is not a hex digit", c));
  };
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  }
  return out;
}

std::string to_hex(const Bytes& bytes) {
  std::string out;
  for (auto b : bytes) out += fmt::format("{:02x}", b);
  return out;
}

SimTime seconds(std::uint64_t s) { return std::chrono::seconds(static_cast<std::int64_t>(s)); }
SimTime millis(std::uint64_t ms) { return SimTime(static_cast<std::int64_t>(ms)); }

std::uint32_t object_id_of(const Fields& f, const std::string& key) {
  const auto v = f.u64(key);
  if (v > kMaxMetricObjectId) {
    throw ScenarioError(f.at(key), fmt::format("object_id {} out of range", v));
  }
  return static_cast<std::uint32_t>(v);
}

// Records the byte offset at which every value starts, keyed by JSON pointer.
// Only ever run on text nlohmann has already accepted.
class PointerScanner {
 public:
  explicit PointerScanner(const std::string& text) : s_(text) {}

  std::optional<std::size_t> find(const std::string& target) {
    target_ = target;
    value("");
    return found_;
  }

 private:
  void ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\n' || s_[pos_] == '\r' ||
                                s_[pos_] == '\t')) {
      ++pos_;
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
        out += s_[pos_ + 1];
        pos_ += 2;
      } else {
        out += s_[pos_++];
      }
    }
    ++pos_;
    return out;
  }

  void value(const std::string& ptr) {
    ws();
    if (found_ || pos_ >= s_.size()) return;
    if (ptr == target_) {
      found_ = pos_;
      return;
    }
    const char c = s_[pos_];
    if (c == '{') {
      ++pos_;
      ws();
      while (pos_ < s_.size() && s_[pos_] != '}') {
        const std::string key = string_token();
        ws();
        ++pos_;  // ':'
        value(ptr + "/" + escape_token(key));
        if (found_) return;
        ws();
        if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
        ws();
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      ws();
      std::size_t index = 0;
      while (pos_ < s_.size() && s_[pos_] != ']') {
        value(ptr + "/" + std::to_string(index++));
        if (found_) return;
        ws();
        if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
        ws();
      }
      ++pos_;
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < s_.size() && std::string_view(",}] \n\r\t").find(s_[pos_]) ==
                                     std::string_view::npos) {
        ++pos_;
      }
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  std::string target_;
  std::optional<std::size_t> found_;
};

std::size_t line_at_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

void check_reference(const Scenario& sc, const std::string& ptr, std::uint64_t agent,
                     std::uint32_t object, SimTime at) {
  if (!sc.has_agent(agent)) {
    throw ScenarioError(ptr + "/agent_id", fmt::format("agent {} is not declared", agent));
  }
  const bool declared = std::any_of(sc.metrics.begin(), sc.metrics.end(),
                                    [&](const MetricSpec& m) { return m.object_id == object; });
  if (!declared) {
    throw ScenarioError(ptr + "/object_id", fmt::format("object_id {} is not declared", object));
  }
  if (at > sc.duration) {
    throw ScenarioError(ptr, fmt::format("time {} ms is beyond the scenario duration", at.count()));
  }
}

}  // namespace

std::vector<std::uint64_t> Scenario::agent_ids() const {
  std::vector<std::uint64_t> ids(agent_count);
  for (std::size_t i = 0; i < agent_count; ++i) ids[i] = first_agent_id + i;
  return ids;
}

bool Scenario::has_agent(std::uint64_t id) const {
  return id >= first_agent_id && id - first_agent_id < agent_count;
}

ChannelKeys Scenario::keys_for(std::uint64_t agent_id) const {
  if (const auto it = key_overrides.find(agent_id); it != key_overrides.end()) return it->second;
  return derive_channel_keys(master_secret, agent_id);
}

std::size_t line_of_pointer(const std::string& text, const std::string& pointer) {
  PointerScanner scanner(text);
  const auto offset = scanner.find(pointer);
  return offset ? line_at_offset(text, *offset) : 1;
}

Scenario scenario_from_json(const json& doc) {
  Scenario sc;
  const Fields top(doc, "",
                   {"schema", "seed", "duration_s", "settle_s", "link", "agents", "channel", "cnmm",
                    "baseline", "traffic", "injections", "level_writes", "agent_failures"});
  if (top.has("schema") && top.text("schema") != "cnmm-scenario/1") {
    throw ScenarioError("/schema", "unsupported schema (expected cnmm-scenario/1)");
  }
  sc.seed = top.u64("seed");
  sc.duration = seconds(top.u64("duration_s"));
  sc.settle = seconds(top.u64("settle_s", 180));

  {
    const Fields f(object_or_empty(doc, "link"), "/link",
                   {"base_latency_ms", "jitter_ms", "loss_prob", "allow_reorder"});
    sc.link.base_latency_ms = static_cast<std::int64_t>(f.u64("base_latency_ms", 0));
    sc.link.jitter_ms = static_cast<std::int64_t>(f.u64("jitter_ms", 0));
    sc.link.loss_prob = f.number("loss_prob", 0.0);
    sc.link.allow_reorder = f.boolean("allow_reorder", true);
  }

  {
    top.require("agents");
    const Fields f(doc["agents"], "/agents",
                   {"count", "first_id", "metrics", "master_secret_hex", "keys"});
    sc.agent_count = f.u64("count");
    sc.first_agent_id = f.u64("first_id", 1);
    sc.master_secret = parse_hex(f.text("master_secret_hex"), f.at("master_secret_hex"));
    const auto& metrics = f.array("metrics");
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      const Fields m(metrics[i], fmt::format("/agents/metrics/{}", i),
                     {"object_id", "name", "minimum_level", "threshold_level", "hysteresis"});
      MetricSpec spec;
      spec.object_id = object_id_of(m, "object_id");
      spec.name = m.text("name", fmt::format("metric{}", spec.object_id));
      spec.minimum_level = m.i64("minimum_level");
      spec.threshold_level = m.i64("threshold_level");
      if (m.has("hysteresis")) spec.hysteresis = m.i64("hysteresis");
      sc.metrics.push_back(std::move(spec));
    }
    const auto& keys = f.array("keys");
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const Fields k(keys[i], fmt::format("/agents/keys/{}", i),
                     {"agent_id", "key_mac_hex", "key_enc_hex"});
      sc.key_overrides[k.u64("agent_id")] =
          ChannelKeys{parse_hex(k.text("key_mac_hex"), k.at("key_mac_hex")),
                      parse_hex(k.text("key_enc_hex"), k.at("key_enc_hex"))};
    }
  }

  {
    const Fields f(object_or_empty(doc, "channel"), "/channel",
                   {"max_fragment", "compression", "cipher"});
    sc.channel.max_fragment = f.u64("max_fragment", 1400);
    const auto comp = f.text("compression", "deflate");
    if (comp == "deflate") sc.channel.compression = Compression::Deflate;
    else if (comp == "identity") sc.channel.compression = Compression::Identity;
    else throw ScenarioError(f.at("compression"), "compression must be deflate or identity");
    const auto cipher = f.text("cipher", "aes-256-ctr");
    if (cipher == "aes-256-ctr") sc.channel.cipher = Cipher::Aes256Ctr;
    else if (cipher == "null") sc.channel.cipher = Cipher::Null;
    else throw ScenarioError(f.at("cipher"), "cipher must be aes-256-ctr or null");
  }

  {
    const Fields f(object_or_empty(doc, "cnmm"), "/cnmm",
                   {"update_interval_s", "trap_retry_limit", "trap_retry_backoff_s",
                    "readvertise_s", "num_virtual_managers", "get_timeout_s", "deadline_slack",
                    "history_depth"});
    sc.agent.update_interval = seconds(f.u64("update_interval_s", 300));
    sc.agent.trap_retry_limit = static_cast<int>(f.u64("trap_retry_limit", 5));
    sc.agent.trap_retry_backoff = seconds(f.u64("trap_retry_backoff_s", 2));
    sc.agent.readvertise_interval = seconds(f.u64("readvertise_s", 10));
    sc.pool.num_virtual_managers = f.u64("num_virtual_managers", 4);
    sc.pool.update_interval_expectation = sc.agent.update_interval;
    sc.pool.get_timeout = seconds(f.u64("get_timeout_s", 5));
    sc.pool.deadline_slack = f.number("deadline_slack", 1.5);
    sc.pool.history_depth = f.u64("history_depth", 1024);
  }

  {
    const Fields f(object_or_empty(doc, "baseline"), "/baseline",
                   {"enabled", "poll_interval_s", "sweep_gap_ms", "reply_delay_ms"});
    sc.baseline_enabled = f.boolean("enabled", true);
    sc.poller.poll_interval = seconds(f.u64("poll_interval_s", 300));
    sc.poller.sweep_gap = millis(f.u64("sweep_gap_ms", 10));
    sc.poller.reply_delay = millis(f.u64("reply_delay_ms", 0));
  }

  const auto& traffic = top.array("traffic");
  for (std::size_t i = 0; i < traffic.size(); ++i) {
    const Fields f(traffic[i], fmt::format("/traffic/{}", i),
                   {"agent_id", "object_id", "octets_per_s", "packets_sent_per_s",
                    "packets_received_per_s", "from_s", "to_s", "step_ms"});
    TrafficProfile p;
    if (f.has("agent_id")) p.agent_id = f.u64("agent_id");
    p.object_id = object_id_of(f, "object_id");
    p.octets_per_s = f.u64("octets_per_s", 0);
    p.packets_sent_per_s = f.u64("packets_sent_per_s", 0);
    p.packets_received_per_s = f.u64("packets_received_per_s", 0);
    p.from = seconds(f.u64("from_s", 0));
    if (f.has("to_s")) p.to = seconds(f.u64("to_s"));
    p.step = millis(f.u64("step_ms", 1000));
    sc.traffic.push_back(p);
  }

  const auto& injections = top.array("injections");
  for (std::size_t i = 0; i < injections.size(); ++i) {
    const Fields f(injections[i], fmt::format("/injections/{}", i),
                   {"at_ms", "agent_id", "type", "object_id", "value", "sent", "received",
                    "octets"});
    const auto type = f.text("type");
    const auto ptr = fmt::format("/injections/{}", i);
    if (type == "sample") {
      sc.samples.push_back(SampleInjection{millis(f.u64("at_ms")), f.u64("agent_id"),
                                           object_id_of(f, "object_id"), f.i64("value")});
      const auto& s = sc.samples.back();
      check_reference(sc, ptr, s.agent_id, s.object_id, s.at);
    } else if (type == "traffic") {
      sc.traffic_injections.push_back(TrafficInjection{
          millis(f.u64("at_ms")), f.u64("agent_id"), object_id_of(f, "object_id"),
          f.u64("sent", 0), f.u64("received", 0), f.u64("octets", 0)});
      const auto& t = sc.traffic_injections.back();
      check_reference(sc, ptr, t.agent_id, t.object_id, t.at);
    } else {
      throw ScenarioError(f.at("type"), "injection type must be sample or traffic");
    }
  }

  const auto& writes = top.array("level_writes");
  for (std::size_t i = 0; i < writes.size(); ++i) {
    const Fields f(writes[i], fmt::format("/level_writes/{}", i),
                   {"at_ms", "agent_id", "object_id", "level", "value"});
    LevelWrite w;
    w.at = millis(f.u64("at_ms"));
    w.agent_id = f.u64("agent_id");
    w.object_id = object_id_of(f, "object_id");
    const auto level = f.text("level");
    if (level == "minimum") w.level = LevelWrite::Level::Minimum;
    else if (level == "threshold") w.level = LevelWrite::Level::Threshold;
    else throw ScenarioError(f.at("level"), "level must be minimum or threshold");
    w.value = f.i64("value");
    sc.level_writes.push_back(w);
  }

  const auto& failures = top.array("agent_failures");
  for (std::size_t i = 0; i < failures.size(); ++i) {
    const Fields f(failures[i], fmt::format("/agent_failures/{}", i),
                   {"agent_id", "fail_at_ms", "recover_at_ms"});
    AgentFailure fail{f.u64("agent_id"), millis(f.u64("fail_at_ms")), std::nullopt};
    if (f.has("recover_at_ms")) fail.recover_at = millis(f.u64("recover_at_ms"));
    sc.failures.push_back(fail);
  }

  validate(sc);
  return sc;
}

void validate(const Scenario& sc) {
  if (sc.duration <= SimTime::zero()) throw ScenarioError("/duration_s", "duration must be positive");
  try {
    sim::validate(sc.link);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("/link", e.what());
  }
  if (sc.agent_count < 1) throw ScenarioError("/agents/count", "at least one agent is required");
  if (sc.metrics.empty()) throw ScenarioError("/agents/metrics", "at least one metric is required");
  if (sc.master_secret.size() < 16) {
    throw ScenarioError("/agents/master_secret_hex", "master secret must be at least 16 bytes");
  }

  std::set<std::uint32_t> declared;
  for (std::size_t i = 0; i < sc.metrics.size(); ++i) {
    const auto ptr = fmt::format("/agents/metrics/{}", i);
    try {
      validate(sc.metrics[i]);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(ptr, e.what());
    }
    if (!declared.insert(sc.metrics[i].object_id).second) {
      throw ScenarioError(ptr + "/object_id",
                          fmt::format("object_id {} declared twice", sc.metrics[i].object_id));
    }
  }

  std::size_t k = 0;
  for (const auto& [id, keys] : sc.key_overrides) {
    const auto ptr = fmt::format("/agents/keys/{}", k++);
    if (!sc.has_agent(id)) throw ScenarioError(ptr + "/agent_id", fmt::format("agent {} is not declared", id));
    try {
      validate(keys);
    } catch (const ChannelError& e) {
      throw ScenarioError(ptr, e.what());
    }
  }

  try {
    validate(sc.channel);
  } catch (const ChannelError& e) {
    throw ScenarioError("/channel/max_fragment", e.what());
  }
  if (sc.agent.update_interval <= SimTime::zero()) {
    throw ScenarioError("/cnmm/update_interval_s", "update interval must be positive");
  }
  if (sc.agent.trap_retry_limit < 1) {
    throw ScenarioError("/cnmm/trap_retry_limit", "trap_retry_limit must be at least 1");
  }
  if (sc.agent.readvertise_interval <= SimTime::zero() ||
      sc.agent.trap_retry_backoff <= SimTime::zero()) {
    throw ScenarioError("/cnmm", "retry and re-advertisement intervals must be positive");
  }
  try {
    validate(sc.pool);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("/cnmm", e.what());
  }
  if (sc.baseline_enabled) {
    try {
      baseline::validate(sc.poller);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError("/baseline", e.what());
    }
    if (sc.duration < sc.poller.poll_interval) {
      throw ScenarioError("/baseline/poll_interval_s", "duration is shorter than one poll interval");
    }
  }

  for (std::size_t i = 0; i < sc.traffic.size(); ++i) {
    const auto& p = sc.traffic[i];
    const auto ptr = fmt::format("/traffic/{}", i);
    if (p.agent_id && !sc.has_agent(*p.agent_id)) {
      throw ScenarioError(ptr + "/agent_id", fmt::format("agent {} is not declared", *p.agent_id));
    }
    if (!declared.contains(p.object_id)) {
      throw ScenarioError(ptr + "/object_id", fmt::format("object_id {} is not declared", p.object_id));
    }
    if (p.step <= SimTime::zero()) throw ScenarioError(ptr + "/step_ms", "step must be positive");
    const SimTime to = p.to.value_or(sc.duration);
    if (to > sc.duration || p.from > to) {
      throw ScenarioError(ptr, "traffic window must lie within the scenario duration");
    }
  }

  for (const auto& s : sc.samples) {
    check_reference(sc, "/injections", s.agent_id, s.object_id, s.at);
  }
  for (const auto& t : sc.traffic_injections) {
    check_reference(sc, "/injections", t.agent_id, t.object_id, t.at);
  }
  for (std::size_t i = 0; i < sc.level_writes.size(); ++i) {
    const auto& w = sc.level_writes[i];
    check_reference(sc, fmt::format("/level_writes/{}", i), w.agent_id, w.object_id, w.at);
  }
  for (std::size_t i = 0; i < sc.failures.size(); ++i) {
    const auto& f = sc.failures[i];
    const auto ptr = fmt::format("/agent_failures/{}", i);
    if (!sc.has_agent(f.agent_id)) {
      throw ScenarioError(ptr + "/agent_id", fmt::format("agent {} is not declared", f.agent_id));
    }
    if (f.fail_at > sc.duration || (f.recover_at && *f.recover_at > sc.duration)) {
      throw ScenarioError(ptr, "failure times must lie within the scenario duration");
    }
    if (f.recover_at && *f.recover_at <= f.fail_at) {
      throw ScenarioError(ptr + "/recover_at_ms", "recovery must come after the failure");
    }
  }
}

Scenario parse_scenario(const std::string& text, const std::string& source_name) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t line = line_at_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ScenarioLoadError(line, fmt::format("{}:{}: invalid JSON: {}", source_name, line, e.what()));
  }
  try {
    return scenario_from_json(doc);
  } catch (const ScenarioError& e) {
    const std::size_t line = line_of_pointer(text, e.pointer());
    const std::string where = e.pointer().empty() ? "/" : e.pointer();
    throw ScenarioLoadError(line, fmt::format("{}:{}: {}: {}", source_name, line, where, e.what()));
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioLoadError(0, fmt::format("{}: cannot open file", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

nlohmann::ordered_json scenario_to_json(const Scenario& sc) {
  using oj = nlohmann::ordered_json;
  oj out;
  out["schema"] = "cnmm-scenario/1";
  out["seed"] = sc.seed;
  out["duration_s"] = std::chrono::duration_cast<std::chrono::seconds>(sc.duration).count();
  out["settle_s"] = std::chrono::duration_cast<std::chrono::seconds>(sc.settle).count();
  out["link"] = {{"base_latency_ms", sc.link.base_latency_ms},
                 {"jitter_ms", sc.link.jitter_ms},
                 {"loss_prob", sc.link.loss_prob},
                 {"allow_reorder", sc.link.allow_reorder}};

  oj metrics = oj::array();
  for (const auto& m : sc.metrics) {
    metrics.push_back({{"object_id", m.object_id},
                       {"name", m.name},
                       {"minimum_level", m.minimum_level},
                       {"threshold_level", m.threshold_level},
                       {"hysteresis", m.effective_hysteresis()}});
  }
  // Secrets are not echoed; a fingerprint identifies which were used.
  const auto fp = hmac_sha256(sc.master_secret, Bytes{'f', 'p'});
  out["agents"] = {{"count", sc.agent_count},
                   {"first_id", sc.first_agent_id},
                   {"metrics", metrics},
                   {"master_secret_fingerprint", to_hex(Bytes(fp.begin(), fp.begin() + 8))},
                   {"key_overrides", sc.key_overrides.size()}};
  out["channel"] = {{"max_fragment", sc.channel.max_fragment},
                    {"compression", to_string(sc.channel.compression)},
                    {"cipher", to_string(sc.channel.cipher)}};
  out["cnmm"] = {{"update_interval_s", sc.agent.update_interval.count() / 1000},
                 {"trap_retry_limit", sc.agent.trap_retry_limit},
                 {"trap_retry_backoff_s", sc.agent.trap_retry_backoff.count() / 1000},
                 {"readvertise_s", sc.agent.readvertise_interval.count() / 1000},
                 {"num_virtual_managers", sc.pool.num_virtual_managers},
                 {"get_timeout_s", sc.pool.get_timeout.count() / 1000},
                 {"deadline_slack", sc.pool.deadline_slack},
                 {"history_depth", sc.pool.history_depth}};
  out["baseline"] = {{"enabled", sc.baseline_enabled},
                     {"poll_interval_s", sc.poller.poll_interval.count() / 1000},
                     {"sweep_gap_ms", sc.poller.sweep_gap.count()},
                     {"reply_delay_ms", sc.poller.reply_delay.count()}};

  oj traffic = oj::array();
  for (const auto& p : sc.traffic) {
    oj t;
    t["agent_id"] = p.agent_id ? oj(*p.agent_id) : oj(nullptr);
    t["object_id"] = p.object_id;
    t["octets_per_s"] = p.octets_per_s;
    t["packets_sent_per_s"] = p.packets_sent_per_s;
    t["packets_received_per_s"] = p.packets_received_per_s;
    t["from_s"] = p.from.count() / 1000;
    t["to_s"] = p.to.value_or(sc.duration).count() / 1000;
    t["step_ms"] = p.step.count();
    traffic.push_back(t);
  }
  out["traffic"] = traffic;
  out["injection_counts"] = {{"samples", sc.samples.size()},
                             {"traffic", sc.traffic_injections.size()},
                             {"level_writes", sc.level_writes.size()}};
  oj failures = oj::array();
  for (const auto& f : sc.failures) {
    failures.push_back({{"agent_id", f.agent_id},
                        {"fail_at_ms", f.fail_at.count()},
                        {"recover_at_ms", f.recover_at ? oj(f.recover_at->count()) : oj(nullptr)}});
  }
  out["agent_failures"] = failures;
  return out;
}

__extension__ using Wide = unsigned __int128;

std::vector<TrafficInjection> expand_traffic(const Scenario& sc) {
  std::vector<TrafficInjection> out(sc.traffic_injections);
  for (const auto& p : sc.traffic) {
    const SimTime to = p.to.value_or(sc.duration);
    const auto step_ms = static_cast<Wide>(p.step.count());
    // Cumulative amount after k steps, floored, so totals are exact.
    auto cumulative = [&](std::uint64_t rate, std::uint64_t k) {
      return static_cast<std::uint64_t>(static_cast<Wide>(rate) * step_ms * k / 1000);
    };
    for (const auto id : sc.agent_ids()) {
      if (p.agent_id && *p.agent_id != id) continue;
      for (std::uint64_t k = 1; p.from + static_cast<std::int64_t>(k) * p.step <= to; ++k) {
        TrafficInjection t;
        t.at = p.from + static_cast<std::int64_t>(k) * p.step;
        t.agent_id = id;
        t.object_id = p.object_id;
        t.sent = cumulative(p.packets_sent_per_s, k) - cumulative(p.packets_sent_per_s, k - 1);
        t.received =
            cumulative(p.packets_received_per_s, k) - cumulative(p.packets_received_per_s, k - 1);
        t.octets = cumulative(p.octets_per_s, k) - cumulative(p.octets_per_s, k - 1);
        out.push_back(t);
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TrafficInjection& a, const TrafficInjection& b) { return a.at < b.at; });
  return out;
}

}  // namespace cnmm
