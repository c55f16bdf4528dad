// Command-line front end: gen-data, train, match, eval, grad-check.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tar/checkpoint.hpp"
#include "tar/config.hpp"
#include "tar/data_synth.hpp"
#include "tar/errors.hpp"
#include "tar/evaluate.hpp"
#include "tar/gradcheck.hpp"
#include "tar/image.hpp"
#include "tar/io.hpp"
#include "tar/train.hpp"

namespace fs = std::filesystem;
using namespace tar;

namespace {

const char* kUsage =
    "usage: tarreg <command> [options]\n"
    "\n"
    "commands:\n"
    "  gen-data   --out DIR --count N [--size S] [--seed K] [--no-perturb]\n"
    "  train      --data DIR --out CKPT [--text LIB | --text-synth] [--val DIR] [--log CSV]\n"
    "  match      --ckpt CKPT --opt IMG --sar IMG --out CSV\n"
    "  eval       --ckpt CKPT --data DIR --out CSV\n"
    "  grad-check [--seed K]\n"
    "\n"
    "common options:\n"
    "  --config FILE   key=value settings\n"
    "  --set KEY=VAL   override one setting (repeatable, applied after --config)\n"
    "  --threads N     worker threads for gen-data and eval (default 1)\n"
    "  --print-config  print the effective settings and exit\n";

struct Args {
  std::string command;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
  std::vector<std::string> flags;
  std::vector<std::string> problems;

  bool has(const std::string& k) const { return values.count(k) > 0; }
  bool flag(const std::string& f) const {
    for (const auto& x : flags)
      if (x == f) return true;
    return false;
  }
  std::string get(const std::string& k) const {
    const auto it = values.find(k);
    return it == values.end() ? std::string() : it->second;
  }
  // Records a problem instead of throwing so every missing option is reported.
  std::string require(const std::string& k) {
    if (!has(k)) problems.push_back("missing --" + k);
    return get(k);
  }
};

const std::map<std::string, std::vector<std::string>> kValueOptions = {
    {"gen-data", {"out", "count", "size", "seed"}},
    {"train", {"data", "out", "text", "val", "log"}},
    {"match", {"ckpt", "opt", "sar", "out"}},
    {"eval", {"ckpt", "data", "out"}},
    {"grad-check", {"seed", "perturb-op"}},
};
const std::map<std::string, std::vector<std::string>> kFlagOptions = {
    {"gen-data", {"no-perturb"}},
    {"train", {"text-synth"}},
};

// Required options are checked by the commands, and unknown ones are kept as
// extras, so one run reports every problem instead of stopping at the first.
Args parse_args(int argc, char** argv) {
  Args a;
  a.command = argv[1];
  CLI::App app;
  app.set_help_flag();
  app.allow_extras();
  const auto values = kValueOptions.find(a.command);
  if (values != kValueOptions.end()) {
    for (const auto& name : values->second) app.add_option("--" + name, a.values[name]);
  }
  if (const auto flags = kFlagOptions.find(a.command); flags != kFlagOptions.end()) {
    for (const auto& name : flags->second) app.add_flag("--" + name);
  }
  std::string config, threads;
  app.add_option("--config", config);
  app.add_option("--threads", threads);
  app.add_option("--set", a.sets)->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_flag("--print-config");
  try {
    app.parse(argc - 1, argv + 1);
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& extra : app.remaining()) {
    a.problems.push_back(extra.rfind("--", 0) == 0
                             ? "unknown option " + extra + " for " + a.command
                             : "unexpected argument '" + extra + "'");
  }
  for (const auto* opt : app.get_options()) {
    const std::string name = opt->get_name().substr(2);
    if (opt->count() == 0) {
      a.values.erase(name);
    } else if (opt->get_expected_min() == 0) {
      a.flags.push_back(name);
    }
  }
  if (!config.empty()) a.values["config"] = config;
  if (!threads.empty()) a.values["threads"] = threads;
  return a;
}

std::optional<std::uint64_t> parse_count(Args& a, const std::string& k) {
  if (!a.has(k)) return std::nullopt;
  const std::string v = a.get(k);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used == v.size() && n >= 0) return static_cast<std::uint64_t>(n);
  } catch (const std::exception&) {
  }
  a.problems.push_back("--" + k + " expects a non-negative integer, got '" + v + "'");
  return std::nullopt;
}

// Builds the run configuration and throws one ConfigError naming every
// problem found in the arguments, the config file and the settings.
RunConfig load_config(Args& a) {
  RunConfig cfg;
  std::vector<std::string> problems = a.problems;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      std::string what = e.what();
      const std::string prefix = "config error: ";
      for (auto at = what.find(prefix); at != std::string::npos; at = what.find(prefix)) {
        what.erase(at, prefix.size());
      }
      problems.push_back(what);
    }
  };
  if (a.has("config")) collect([&] { apply_config_file(cfg, a.get("config")); });
  if (!a.sets.empty()) collect([&] { apply_overrides(cfg, a.sets); });
  for (const auto& p : cfg.problems()) problems.push_back(p);
  a.problems.clear();
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " problem(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

void throw_if_problems(Args& a) {
  if (a.problems.empty()) return;
  std::string msg = std::to_string(a.problems.size()) + " problem(s):";
  for (const auto& p : a.problems) msg += "\n  " + p;
  throw ConfigError(msg);
}

std::size_t thread_count(Args& a) {
  const auto n = parse_count(a, "threads");
  if (n && *n == 0) a.problems.push_back("--threads must be at least 1");
  return n ? static_cast<std::size_t>(*n) : 1;
}

// ---- commands ---------------------------------------------------------------

int cmd_gen_data(Args& a) {
  const std::string out = a.require("out");
  const auto count = parse_count(a, "count");
  if (!a.has("count")) a.problems.push_back("missing --count");
  const auto size = parse_count(a, "size");
  const auto seed = parse_count(a, "seed");
  const std::size_t threads = thread_count(a);
  if (size) a.sets.push_back("image_size=" + std::to_string(*size));
  if (a.flag("no-perturb")) a.sets.push_back("perturb=false");
  if (seed) a.sets.push_back("seed=" + std::to_string(*seed));
  const RunConfig cfg = load_config(a);

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IngestionError("cannot create directory " + out);

  const std::size_t n = static_cast<std::size_t>(*count);
  std::vector<std::string> ids(n);
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](std::size_t t) {
    try {
      for (std::size_t i = t; i < n; i += threads) {
        const PairSample p = gen_sample(cfg.train.seed, i, cfg.synth);
        write_pair(p, out);
        ids[i] = p.id;
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker, t);
  worker(0);
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  write_manifest(ids, out);
  std::printf("wrote %zu pairs to %s\n", n, out.c_str());
  return 0;
}

std::vector<PairSample> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("no such dataset directory: " + dir);
  std::vector<PairSample> pairs = load_pair_dir(dir);
  if (pairs.empty()) throw IngestionError("no pairs found in " + dir);
  return pairs;
}

int cmd_train(Args& a) {
  const std::string data = a.require("data");
  const std::string out = a.require("out");
  const bool synth_text = a.flag("text-synth");
  if (synth_text && a.has("text")) a.problems.push_back("--text and --text-synth are exclusive");
  RunConfig cfg = load_config(a);
  if (cfg.model.text_stage != TextStage::none && !synth_text && !a.has("text")) {
    throw ConfigError("text_stage=" + std::string(text_stage_name(cfg.model.text_stage)) +
                      " needs --text LIB or --text-synth");
  }

  std::optional<TextLibrary> lib;
  if (cfg.model.text_stage != TextStage::none) {
    if (synth_text) {
      lib = synth_embeddings(categories_by_name(cfg.text.vocabulary), cfg.model.d_text,
                             cfg.text.text_seed);
    } else {
      lib = load_library(a.get("text"));
      cfg.model.d_text = lib->dim;
    }
  }

  const std::vector<PairSample> train_set = load_dataset(data);
  std::vector<PairSample> val;
  if (a.has("val")) {
    val = load_dataset(a.get("val"));
    if (val.size() > cfg.train.val_count) val.resize(cfg.train.val_count);
  }

  Model model(cfg.model, cfg.train.seed);
  if (lib) model.set_text(*lib);

  const std::string log_path = a.has("log") ? a.get("log") : out + ".log.csv";
  std::string log = std::string(kTrainLogHeader) + "\n";
  train(model, train_set, val, cfg, [&](const EpochLog& e) {
    const std::string line = format_epoch(e);
    log += line + "\n";
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  });
  save_checkpoint(model, out);
  write_file(log_path, log);
  return 0;
}

int cmd_match(Args& a) {
  const std::string ckpt = a.require("ckpt");
  const std::string opt = a.require("opt");
  const std::string sar = a.require("sar");
  const std::string out = a.require("out");
  const RunConfig cfg = load_config(a);
  const Model model = load_checkpoint(ckpt);
  const Image io = read_pgm(opt), is = read_pgm(sar);
  PrecisionScope scope(cfg.train.precision);
  const MatchResult m = model.match(io, is);
  write_file(out, match_csv(m.fine));
  std::printf("%zu matches\n", m.fine.size());
  return 0;
}

int cmd_eval(Args& a) {
  const std::string ckpt = a.require("ckpt");
  const std::string data = a.require("data");
  const std::string out = a.require("out");
  const std::size_t threads = thread_count(a);
  const RunConfig cfg = load_config(a);
  const Model model = load_checkpoint(ckpt);
  const EvalReport rep = evaluate(model, load_dataset(data), cfg.eval, cfg.train.precision, threads);
  write_file(out, report_csv(rep));
  std::printf("rmse %.6f cmr@1 %.6f cmr@3 %.6f cmr@5 %.6f\n", rep.rmse_mean, rep.cmr[0],
              rep.cmr[1], rep.cmr[2]);
  return 0;
}

int cmd_grad_check(Args& a) {
  const std::uint64_t seed = parse_count(a, "seed").value_or(0);
  // Hidden negative control: scales one op's analytic gradient.
  const std::string perturb = a.get("perturb-op");
  bool perturb_found = perturb.empty();
  for (const auto& c : gradcheck_registry()) perturb_found |= c.name == perturb;
  if (!perturb_found) a.problems.push_back("unknown op '" + perturb + "' for --perturb-op");
  throw_if_problems(a);

  bool ok = true;
  for (const auto& c : gradcheck_registry()) {
    const GradCheckResult r = c.run(seed, c.name == perturb ? 1.01 : 1.0);
    const bool pass = r.max_rel_error < kGradCheckTolerance;
    ok &= pass;
    std::printf("%-16s max_rel_err %.3e  entries %4zu  %s\n", c.name.c_str(), r.max_rel_error,
                r.checked, pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : static_cast<int>(ExitCode::kNumerical);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2 || std::string(argv[1]) == "--help" || std::string(argv[1]) == "-h") {
    std::fputs(kUsage, argc < 2 ? stderr : stdout);
    return argc < 2 ? static_cast<int>(ExitCode::kConfig) : 0;
  }
  const std::map<std::string, int (*)(Args&)> commands = {
      {"gen-data", cmd_gen_data}, {"train", cmd_train}, {"match", cmd_match},
      {"eval", cmd_eval},         {"grad-check", cmd_grad_check},
  };
  const auto it = commands.find(argv[1]);
  if (it == commands.end()) {
    std::fprintf(stderr, "unknown command '%s'\n%s", argv[1], kUsage);
    return static_cast<int>(ExitCode::kConfig);
  }
  try {
    Args a = parse_args(argc, argv);
    if (a.flag("print-config")) {
      std::fputs(load_config(a).to_text().c_str(), stdout);
      return 0;
    }
    return it->second(a);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kFormat);
  }
}
