#include "tar/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "tar/errors.hpp"
#include "tar/io.hpp"
#include "tar/text_library.hpp"

namespace tar {

const char* text_stage_name(TextStage s) {
  switch (s) {
    case TextStage::none: return "none";
    case TextStage::coarse: return "coarse";
    case TextStage::fine: return "fine";
    case TextStage::both: return "both";
  }
  return "?";
}

const char* pe_stage_name(PeStage s) { return s == PeStage::pre_tafe ? "pre_tafe" : "post_tafe"; }

const char* fine_mode_name(FineMode m) {
  return m == FineMode::expectation ? "expectation" : "argmax";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(const std::string& key, T RunConfig::*group, std::size_t T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_uint(key, v); },
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field u64_field(const std::string& key, T RunConfig::*group, std::uint64_t T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_uint(key, v); },
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field double_field(const std::string& key, T RunConfig::*group, double T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_double(key, v); },
          [=](const RunConfig& c) { return fmt_double((c.*group).*member); }};
}

template <typename T>
Field bool_field(const std::string& key, T RunConfig::*group, bool T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_bool(key, v); },
          [=](const RunConfig& c) { return std::string((c.*group).*member ? "true" : "false"); }};
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> options) {
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  throw ConfigError(key + ": expected one of " + allowed + ", got '" + v + "'");
}

const std::vector<std::pair<std::string, Field>>& registry() {
  using R = RunConfig;
  static const std::vector<std::pair<std::string, Field>> fields = [] {
    std::vector<std::pair<std::string, Field>> f;
    auto add = [&](const std::string& k, Field fld) { f.emplace_back(k, std::move(fld)); };
    // model
    add("d_f", size_field("d_f", &R::model, &ModelConfig::d_f));
    add("d_c", size_field("d_c", &R::model, &ModelConfig::d_c));
    add("stem_width", size_field("stem_width", &R::model, &ModelConfig::stem_width));
    add("mid_width", size_field("mid_width", &R::model, &ModelConfig::mid_width));
    add("shared_weights", bool_field("shared_weights", &R::model, &ModelConfig::shared_weights));
    add("heads", size_field("heads", &R::model, &ModelConfig::heads));
    add("n_tafe", size_field("n_tafe", &R::model, &ModelConfig::n_tafe));
    add("ffn_mult", size_field("ffn_mult", &R::model, &ModelConfig::ffn_mult));
    add("text_stage",
        {[](R& c, const std::string& v) {
           c.model.text_stage = parse_enum<TextStage>(
               "text_stage", v,
               {{"none", TextStage::none}, {"coarse", TextStage::coarse},
                {"fine", TextStage::fine}, {"both", TextStage::both}});
         },
         [](const R& c) { return std::string(text_stage_name(c.model.text_stage)); }});
    add("pe_stage",
        {[](R& c, const std::string& v) {
           c.model.pe_stage = parse_enum<PeStage>(
               "pe_stage", v, {{"pre_tafe", PeStage::pre_tafe}, {"post_tafe", PeStage::post_tafe}});
         },
         [](const R& c) { return std::string(pe_stage_name(c.model.pe_stage)); }});
    add("d_text", size_field("d_text", &R::model, &ModelConfig::d_text));
    add("theta_c", double_field("theta_c", &R::model, &ModelConfig::theta_c));
    add("temperature", double_field("temperature", &R::model, &ModelConfig::temperature));
    add("fine_window", size_field("fine_window", &R::model, &ModelConfig::fine_window));
    add("fine_mode",
        {[](R& c, const std::string& v) {
           c.model.fine_mode = parse_enum<FineMode>(
               "fine_mode", v,
               {{"expectation", FineMode::expectation}, {"argmax", FineMode::argmax}});
         },
         [](const R& c) { return std::string(fine_mode_name(c.model.fine_mode)); }});
    // text library
    add("vocabulary", {[](R& c, const std::string& v) {
                         c.text.vocabulary = parse_enum<std::string>(
                             "vocabulary", v, {{"basic", "basic"}, {"expanded", "expanded"}});
                       },
                       [](const R& c) { return c.text.vocabulary; }});
    add("text_seed", u64_field("text_seed", &R::text, &TextConfig::text_seed));
    // losses
    add("focal_alpha", double_field("focal_alpha", &R::loss, &LossConfig::focal_alpha));
    add("focal_gamma", double_field("focal_gamma", &R::loss, &LossConfig::focal_gamma));
    add("lambda_pos", double_field("lambda_pos", &R::loss, &LossConfig::lambda_pos));
    add("lambda_neg", double_field("lambda_neg", &R::loss, &LossConfig::lambda_neg));
    add("lambda_c", double_field("lambda_c", &R::loss, &LossConfig::lambda_c));
    add("lambda_f", double_field("lambda_f", &R::loss, &LossConfig::lambda_f));
    add("neg_ratio", size_field("neg_ratio", &R::loss, &LossConfig::neg_ratio));
    // training
    add("lr", double_field("lr", &R::train, &TrainConfig::lr));
    add("warmup_frac", double_field("warmup_frac", &R::train, &TrainConfig::warmup_frac));
    add("milestones",
        {[](R& c, const std::string& v) {
           std::vector<double> out;
           std::stringstream ss(v);
           std::string item;
           while (std::getline(ss, item, ',')) {
             item = trim(item);
             if (!item.empty()) out.push_back(parse_double("milestones", item));
           }
           c.train.milestones = out;
         },
         [](const R& c) {
           std::string s;
           for (double m : c.train.milestones) s += (s.empty() ? "" : ",") + fmt_double(m);
           return s;
         }});
    add("lr_decay", double_field("lr_decay", &R::train, &TrainConfig::lr_decay));
    add("beta1", double_field("beta1", &R::train, &TrainConfig::beta1));
    add("beta2", double_field("beta2", &R::train, &TrainConfig::beta2));
    add("adam_eps", double_field("adam_eps", &R::train, &TrainConfig::adam_eps));
    add("epochs", size_field("epochs", &R::train, &TrainConfig::epochs));
    add("batch", size_field("batch", &R::train, &TrainConfig::batch));
    add("seed", u64_field("seed", &R::train, &TrainConfig::seed));
    add("precision", {[](R& c, const std::string& v) {
                        c.train.precision = parse_enum<Precision>(
                            "precision", v, {{"f32", Precision::f32}, {"f64", Precision::f64}});
                      },
                      [](const R& c) { return std::string(precision_name(c.train.precision)); }});
    add("val_count", size_field("val_count", &R::train, &TrainConfig::val_count));
    // evaluation
    add("estimator", {[](R& c, const std::string& v) {
                        c.eval.estimator = parse_enum<EstimateMethod>(
                            "estimator", v,
                            {{"ransac", EstimateMethod::ransac}, {"lsq", EstimateMethod::lsq}});
                      },
                      [](const R& c) {
                        return std::string(c.eval.estimator == EstimateMethod::ransac ? "ransac"
                                                                                      : "lsq");
                      }});
    add("ransac_iters",
        {[](R& c, const std::string& v) {
           c.eval.ransac_iters = static_cast<int>(parse_uint("ransac_iters", v));
         },
         [](const R& c) { return std::to_string(c.eval.ransac_iters); }});
    add("ransac_radius", double_field("ransac_radius", &R::eval, &EvalConfig::ransac_radius));
    add("ransac_seed", u64_field("ransac_seed", &R::eval, &EvalConfig::ransac_seed));
    // synthesis
    add("image_size", size_field("image_size", &R::synth, &SynthConfig::size));
    add("texture_octaves",
        {[](R& c, const std::string& v) {
           c.synth.octaves = static_cast<int>(parse_uint("texture_octaves", v));
         },
         [](const R& c) { return std::to_string(c.synth.octaves); }});
    add("speckle_looks", double_field("speckle_looks", &R::synth, &SynthConfig::looks));
    add("gamma_min", double_field("gamma_min", &R::synth, &SynthConfig::gamma_min));
    add("gamma_max", double_field("gamma_max", &R::synth, &SynthConfig::gamma_max));
    add("perturb", bool_field("perturb", &R::synth, &SynthConfig::perturb));
    add("scale_min",
        {[](R& c, const std::string& v) { c.synth.perturbation.scale_min = parse_double("scale_min", v); },
         [](const R& c) { return fmt_double(c.synth.perturbation.scale_min); }});
    add("scale_max",
        {[](R& c, const std::string& v) { c.synth.perturbation.scale_max = parse_double("scale_max", v); },
         [](const R& c) { return fmt_double(c.synth.perturbation.scale_max); }});
    add("rotation_deg",
        {[](R& c, const std::string& v) {
           c.synth.perturbation.rotation_deg = parse_double("rotation_deg", v);
         },
         [](const R& c) { return fmt_double(c.synth.perturbation.rotation_deg); }});
    add("translation_frac",
        {[](R& c, const std::string& v) {
           c.synth.perturbation.translation_frac = parse_double("translation_frac", v);
         },
         [](const R& c) { return fmt_double(c.synth.perturbation.translation_frac); }});
    return f;
  }();
  return fields;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : registry()) {
    if (k == key) return &f;
  }
  return nullptr;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown key '" + key + "'");
  f->set(*this, trim(value));
}

std::string RunConfig::get(const std::string& key) const {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown key '" + key + "'");
  return f->get(*this);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : registry()) out.push_back(k);
  return out;
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> p;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) p.push_back(msg);
  };
  const ModelConfig& m = model;
  need(m.d_f > 0, "d_f must be positive");
  need(m.d_c > 0, "d_c must be positive");
  need(m.d_c >= m.d_f, "d_c must be >= d_f");
  need(m.stem_width > 0 && m.mid_width > 0, "stem_width and mid_width must be positive");
  need(m.heads > 0 && m.d_c % m.heads == 0, "d_c must be divisible by heads");
  need(m.heads > 0 && m.d_f % m.heads == 0, "d_f must be divisible by heads");
  need(m.d_c % 4 == 0, "d_c must be divisible by 4 for the positional encoding");
  need(m.n_tafe >= 1, "n_tafe must be >= 1");
  need(m.ffn_mult >= 1, "ffn_mult must be >= 1");
  need(m.d_text >= 8, "d_text must be >= 8");
  need(m.theta_c > 0.0 && m.theta_c < 1.0, "theta_c must lie in (0, 1)");
  need(m.temperature > 0.0, "temperature must be positive");
  need(m.fine_window % 2 == 1, "fine_window must be odd");
  const LossConfig& l = loss;
  need(l.focal_alpha > 0.0 && l.focal_alpha < 1.0, "focal_alpha must lie in (0, 1)");
  need(l.focal_gamma >= 0.0, "focal_gamma must be >= 0");
  need(l.lambda_pos >= 0.0 && l.lambda_neg >= 0.0 && l.lambda_c >= 0.0 && l.lambda_f >= 0.0,
       "loss weights lambda_* must be >= 0");
  need(l.neg_ratio >= 1, "neg_ratio must be >= 1");
  const TrainConfig& t = train;
  need(t.lr > 0.0, "lr must be positive");
  need(t.warmup_frac >= 0.0 && t.warmup_frac < 1.0, "warmup_frac must lie in [0, 1)");
  bool sorted = true;
  for (std::size_t i = 0; i < t.milestones.size(); ++i) {
    if (t.milestones[i] <= 0.0 || t.milestones[i] > 1.0) sorted = false;
    if (i > 0 && t.milestones[i] <= t.milestones[i - 1]) sorted = false;
  }
  need(sorted, "milestones must be strictly increasing fractions in (0, 1]");
  need(t.lr_decay > 0.0 && t.lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  need(t.beta1 >= 0.0 && t.beta1 < 1.0 && t.beta2 >= 0.0 && t.beta2 < 1.0,
       "beta1 and beta2 must lie in [0, 1)");
  need(t.adam_eps > 0.0, "adam_eps must be positive");
  need(t.epochs >= 1, "epochs must be >= 1");
  need(t.batch >= 1, "batch must be >= 1");
  need(eval.ransac_iters >= 1, "ransac_iters must be >= 1");
  need(eval.ransac_radius > 0.0, "ransac_radius must be positive");
  try {
    synth.validate();
  } catch (const Error& e) {
    p.push_back(e.what());
  }
  return p;
}

void RunConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = std::to_string(p.size()) + " invalid setting(s):";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : registry()) out += k + "=" + f.get(*this) + "\n";
  return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) {
      errors.push_back(where + "expected key=value");
      continue;
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      errors.push_back(where + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " problem(s) in " + source + ":";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IngestionError&) {
    throw ConfigError("cannot read config file '" + path + "'");
  }
  apply_config_text(cfg, text, path);
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  std::string text;
  for (const auto& o : overrides) text += o + "\n";
  apply_config_text(cfg, text, "--set");
}

}  // namespace tar
