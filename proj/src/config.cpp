#include "mlpo/config.hpp"

#include <cstdlib>
#include <set>

#include "mlpo/error.hpp"
#include "mlpo/records_io.hpp"
#include "mlpo/rng.hpp"

namespace mlpo {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown fields.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw UsageError(field(key) + " is required");
    return j_.at(key);
  }

  Section section(const std::string& key) { return Section(raw(key), field(key)); }

  std::uint64_t seed(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw UsageError(field(key) + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  void count(const std::string& key, std::size_t& out, std::size_t min = 0) {
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    const json& v = raw(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < static_cast<std::int64_t>(min)) {
      throw UsageError(field(key) + " must be an integer >= " + std::to_string(min));
    }
    out = v.get<std::size_t>();
  }

  void integer(const std::string& key, int& out, int min) {
    std::size_t v = static_cast<std::size_t>(out);
    count(key, v, static_cast<std::size_t>(min));
    out = static_cast<int>(v);
  }

  void real(const std::string& key, double& out) {
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    const json& v = raw(key);
    if (!v.is_number()) throw UsageError(field(key) + " must be a number");
    out = v.get<double>();
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    const json& v = raw(key);
    if (!v.is_string()) throw UsageError(field(key) + " must be a string");
    out = v.get<std::string>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    const json& v = raw(key);
    if (!v.is_boolean()) throw UsageError(field(key) + " must be true or false");
    out = v.get<bool>();
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    const json& v = raw(key);
    if (!v.is_array()) throw UsageError(field(key) + " must be an array of strings");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) throw UsageError(field(key) + " must be an array of strings");
      out.push_back(e.get<std::string>());
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.contains(k)) throw UsageError(field(k) + " is not a known field");
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Wraps checks that throw their own UsageError so the message carries the
// config path.
template <class F>
void checked(const std::string& path, F&& f) {
  try {
    f();
  } catch (const UsageError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void read_train(Section s, TrainConfig& t, bool preference) {
  s.real("learning_rate", t.learning_rate);
  s.count("batch_size", t.batch_size, 1);
  s.count("steps", t.steps);
  if (preference) {
    s.real("beta", t.beta);
    s.real("alpha", t.alpha);
  }
  s.finish();
  checked(s.where(), [&] { t.validate(); });
}

}  // namespace

std::vector<std::string> ExperimentConfig::attribute_names() const {
  std::vector<std::string> out;
  for (const auto& a : attributes) out.push_back(a.spec.id);
  return out;
}

const DataSpec& ExperimentConfig::attribute(std::string_view name) const {
  for (const auto& a : attributes) {
    if (a.spec.id == name) return a;
  }
  std::string known;
  for (const auto& a : attributes) known += (known.empty() ? "" : ", ") + a.spec.id;
  throw UsageError("unknown attribute '" + std::string(name) + "' (known: " + known + ")");
}

std::uint64_t ExperimentConfig::hash() const {
  json doc = source;
  if (doc.is_object()) doc.erase("output_dir");
  return fnv1a(doc.dump());
}

ExperimentConfig parse_config(const json& doc, bool apply_env) {
  ExperimentConfig c;
  c.source = doc;
  Section root(doc, "");

  std::string out_dir = c.output_dir.string();
  root.text("output_dir", out_dir);
  c.output_dir = out_dir;

  {
    auto s = root.section("seeds");
    c.seeds.init = s.seed("init");
    c.seeds.sampling = s.seed("sampling");
    c.seeds.pairing = s.seed("pairing");
    c.seeds.training = s.seed("training");
    s.finish();
  }
  {
    auto s = root.section("oracles");
    c.oracles.energy_seed = s.seed("energy_seed");
    c.oracles.encoder_seed = s.seed("encoder_seed");
    s.finish();
  }

  const json& attrs = root.raw("attributes");
  if (!attrs.is_array() || attrs.empty()) {
    throw UsageError("attributes must be a non-empty array");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    const std::string path = "attributes[" + std::to_string(i) + "]";
    Section s(attrs[i], path);
    DataSpec d;
    s.text("id", d.spec.id);
    if (!s.has("id")) throw UsageError(path + ".id is required");
    s.text("motif", d.spec.motif);
    if (!s.has("motif")) throw UsageError(path + ".motif is required");
    s.real("insertion_rate", d.spec.insertion_rate);
    s.count("length_min", d.spec.length_min);
    s.count("length_max", d.spec.length_max);
    d.spec.seed = s.seed("seed");
    s.count("train_size", d.train_size, 1);
    s.finish();
    if (!is_valid_residues(d.spec.motif)) {
      throw UsageError(path + ".motif: '" + d.spec.motif +
                       "' contains characters outside the 20-letter alphabet");
    }
    checked(path, [&] { d.spec.validate(); });
    if (!names.insert(d.spec.id).second) {
      throw UsageError(path + ".id: duplicate attribute '" + d.spec.id + "'");
    }
    c.attributes.push_back(std::move(d));
  }

  if (root.has("model")) {
    auto s = root.section("model");
    s.integer("width", c.model.width, 1);
    s.integer("layers", c.model.layers, 1);
    s.integer("heads", c.model.heads, 1);
    s.integer("context", c.model.context, 2);
    s.integer("mlp_hidden", c.model.mlp_hidden, 1);
    s.integer("prefix_length", c.model.prefix_length, 1);
    s.real("init_scale", c.model.init_scale);
    s.real("prefix_init_scale", c.model.prefix_init_scale);
    s.finish();
    checked("model", [&] { c.model.validate(); });
  }

  c.sft = TrainConfig::sft_defaults();
  c.preference = TrainConfig::preference_defaults();
  read_train(root.section("sft"), c.sft, false);
  read_train(root.section("preference"), c.preference, true);
  c.sft.seed = derive_seed(c.seeds.training, "sft");
  c.preference.seed = derive_seed(c.seeds.training, "preference");

  if (root.has("sampling")) {
    auto s = root.section("sampling");
    s.count("candidates", c.sampling.candidates, 2);
    s.count("eval_samples", c.sampling.eval_samples, 2);
    s.count("max_len", c.sampling.max_len, 3);
    s.real("temperature", c.sampling.temperature);
    s.count("min_length", c.sampling.min_length, 3);
    s.count("max_redraws", c.sampling.max_redraws, 1);
    s.finish();
    if (!(c.sampling.temperature > 0.0)) throw UsageError("sampling.temperature must be > 0");
    if (c.sampling.min_length > c.sampling.max_len) {
      throw UsageError("sampling.min_length must not exceed sampling.max_len");
    }
    if (c.sampling.max_len > kDefaultMaxLength) {
      throw UsageError("sampling.max_len exceeds " + std::to_string(kDefaultMaxLength));
    }
  }

  if (root.has("pairs")) {
    auto s = root.section("pairs");
    s.count("max_pairs", c.max_pairs, 1);
    s.finish();
  }

  {
    auto s = root.section("arms");
    s.text("single_attribute", c.arms.single_attribute);
    s.boolean("dpo_baseline", c.arms.dpo_baseline);
    s.strings("multi_attributes", c.arms.multi_attributes);
    s.finish();
    if (!c.arms.single_attribute.empty()) {
      checked("arms.single_attribute", [&] { c.attribute(c.arms.single_attribute); });
    }
    std::set<std::string> multi;
    for (const auto& a : c.arms.multi_attributes) {
      checked("arms.multi_attributes", [&] { c.attribute(a); });
      if (!multi.insert(a).second) {
        throw UsageError("arms.multi_attributes: duplicate attribute '" + a + "'");
      }
    }
    if (c.arms.multi_attributes.size() == 1) {
      throw UsageError("arms.multi_attributes needs at least two attributes (or none)");
    }
  }
  root.finish();

  const int needed = static_cast<int>(c.sampling.max_len) + 1 +
                     static_cast<int>(std::max<std::size_t>(1, c.arms.multi_attributes.size())) *
                         c.model.prefix_length;
  if (needed > c.model.context) {
    throw UsageError("model.context " + std::to_string(c.model.context) +
                     " is too small for sampling.max_len plus prefixes (" +
                     std::to_string(needed) + ")");
  }

  if (apply_env) {
    if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
      c.output_dir = env;
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, bool apply_env) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": not valid JSON: " + e.what());
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return parse_config(doc, apply_env);
}

}  // namespace mlpo
