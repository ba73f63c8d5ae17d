#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crosscog/corpus.hpp"
#include "crosscog/digest.hpp"
#include "crosscog/embed.hpp"
#include "crosscog/errors.hpp"
#include "crosscog/metrics.hpp"
#include "crosscog/model.hpp"
#include "crosscog/profiles.hpp"
#include "crosscog/synth.hpp"
#include "crosscog/train.hpp"
#include "crosscog/zeroshot.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace crosscog;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return 2;
    case ErrorCode::NonFiniteLoss: return 4;
    case ErrorCode::BackendUnavailable: return 5;
    case ErrorCode::TemMismatch: return 6;
    default: return 3;  // data and io problems
  }
}

// ---- flat key=value config -------------------------------------------------

using ConfigMap = std::map<std::string, std::string>;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      // training
      "d", "mapper_hidden", "head_hidden", "cdm", "batch_size", "learning_rate",
      "max_epochs", "patience", "seed", "domain_weights", "ablation",
      "pooled_validation", "min_responses",
      // embedder
      "tem", "tem_dim", "tem_seed", "cache_path", "remote_endpoint",
      "remote_model", "remote_batch_size", "remote_max_inflight",
      "remote_max_retries",
      // evaluation / editing
      "doa_weighted", "doa_scope", "doa_exhaustive_limit", "doa_sampled_pairs",
      "alpha",
      // generator
      "n_domains", "n_students", "n_exercises", "n_concepts",
      "responses_per_student", "shared_vocab_fraction", "latent_dim", "guess",
      "slip", "difficulty_shift", "min_concepts_per_exercise",
      "max_concepts_per_exercise",
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

ConfigMap load_config(const std::string& path) {
  ConfigMap cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError,
                  path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (!known_keys().count(key))
      throw Error(ErrorCode::ConfigError,
                  path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    cfg[key] = val;
  }
  return cfg;
}

long long to_ll(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "'" + key + "' is not an integer: " + v);
  }
}

double to_dbl(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "'" + key + "' is not a number: " + v);
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::ConfigError, "'" + key + "' is not a boolean: " + v);
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// A flag plus its CLI11 handle; given() means the user passed it, which
/// beats any config-file value.
template <class T>
struct FlagVal {
  T v{};
  CLI::Option* o = nullptr;
  bool given() const { return o && o->count() > 0; }
};

int resolve_int(const FlagVal<int>& f, const ConfigMap& c, const std::string& key,
                int dflt) {
  if (f.given()) return f.v;
  const auto it = c.find(key);
  return it == c.end() ? dflt : static_cast<int>(to_ll(it->second, key));
}

double resolve_dbl(const FlagVal<double>& f, const ConfigMap& c,
                   const std::string& key, double dflt) {
  if (f.given()) return f.v;
  const auto it = c.find(key);
  return it == c.end() ? dflt : to_dbl(it->second, key);
}

bool resolve_bool(const FlagVal<bool>& f, const ConfigMap& c, const std::string& key,
                  bool dflt) {
  if (f.given()) return f.v;
  const auto it = c.find(key);
  return it == c.end() ? dflt : to_bool(it->second, key);
}

std::string resolve_str(const FlagVal<std::string>& f, const ConfigMap& c,
                        const std::string& key, const std::string& dflt) {
  if (f.given()) return f.v;
  const auto it = c.find(key);
  return it == c.end() ? dflt : it->second;
}

std::uint64_t resolve_seed(const FlagVal<std::uint64_t>& f, const ConfigMap& c) {
  if (f.given()) return f.v;
  const auto it = c.find("seed");
  if (it == c.end()) return 0;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "'seed' is not an integer: " + it->second);
  }
}

// ---- embedder construction --------------------------------------------------

struct TemOptions {
  std::string kind = "local-hash";
  int dim = 256;
  std::uint64_t tem_seed = 0;
  std::string cache_path;
  RemoteTemConfig remote;
};

/// Owns whichever embedder stack the run needs. `tem()` is the one to use.
struct TemBundle {
  std::unique_ptr<TextEmbedder> backend;
  std::unique_ptr<EmbeddingCache> cache;
  std::unique_ptr<TextEmbedder> caching;

  TextEmbedder& tem() { return caching ? *caching : *backend; }
};

TemBundle build_tem(const TemOptions& opt) {
  TemBundle b;
  if (opt.kind == "local-hash") {
    b.backend = std::make_unique<LocalHashEmbedder>(opt.dim, opt.tem_seed);
  } else if (opt.kind == "remote") {
    RemoteTemConfig rc = opt.remote;
    if (const char* tok = std::getenv("CROSSCOG_TEM_TOKEN")) rc.auth_token = tok;
    b.backend = make_remote_embedder(rc);
  } else {
    throw Error(ErrorCode::ConfigError, "tem must be local-hash or remote, got '" +
                                            opt.kind + "'");
  }
  if (!opt.cache_path.empty()) {
    b.cache = std::make_unique<EmbeddingCache>(opt.cache_path);
    b.caching = std::make_unique<CachingEmbedder>(*b.backend, *b.cache);
  }
  return b;
}

/// Recovers dim/seed from a "local-hash-v1-d{dim}-s{seed}" id so diagnose can
/// rebuild the training embedder without extra flags.
std::optional<std::pair<int, std::uint64_t>> parse_local_hash_id(const std::string& id) {
  const std::string prefix = "local-hash-v1-d";
  if (id.rfind(prefix, 0) != 0) return std::nullopt;
  const auto s_pos = id.find("-s", prefix.size());
  if (s_pos == std::string::npos) return std::nullopt;
  try {
    const int dim = std::stoi(id.substr(prefix.size(), s_pos - prefix.size()));
    const std::uint64_t seed = std::stoull(id.substr(s_pos + 2));
    return std::make_pair(dim, seed);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

struct TemFlags {
  FlagVal<std::string> kind;
  FlagVal<int> dim;
  FlagVal<std::uint64_t> tem_seed;
  FlagVal<std::string> cache;

  void attach(CLI::App* sub) {
    kind.o = sub->add_option("--tem", kind.v, "embedder backend: local-hash or remote");
    dim.o = sub->add_option("--tem-dim", dim.v, "language vector dimension");
    tem_seed.o = sub->add_option("--tem-seed", tem_seed.v, "local-hash embedder seed");
    cache.o = sub->add_option("--cache", cache.v, "embedding cache file");
  }

  bool any_given() const {
    return kind.given() || dim.given() || tem_seed.given();
  }

  TemOptions resolve(const ConfigMap& cfg) const {
    TemOptions t;
    t.kind = resolve_str(kind, cfg, "tem", "local-hash");
    t.dim = resolve_int(dim, cfg, "tem_dim", 256);
    t.tem_seed = tem_seed.given()
                     ? tem_seed.v
                     : (cfg.count("tem_seed")
                            ? std::stoull(cfg.at("tem_seed"))
                            : 0);
    t.cache_path = resolve_str(cache, cfg, "cache_path", "");
    t.remote.endpoint = resolve_str({}, cfg, "remote_endpoint", "");
    t.remote.model = resolve_str({}, cfg, "remote_model", "");
    t.remote.dim = t.dim;
    t.remote.batch_size = resolve_int({}, cfg, "remote_batch_size", 64);
    t.remote.max_inflight = resolve_int({}, cfg, "remote_max_inflight", 8);
    t.remote.max_retries = resolve_int({}, cfg, "remote_max_retries", 3);
    return t;
  }

  /// For inference commands: flags win, otherwise rebuild what the checkpoint
  /// says it was trained with.
  TemOptions resolve_for(const ModelMeta& meta, const ConfigMap& cfg) const {
    if (any_given() || cfg.count("tem") || cfg.count("tem_dim") || cfg.count("tem_seed"))
      return resolve(cfg);
    if (const auto parsed = parse_local_hash_id(meta.tem_id)) {
      TemOptions t;
      t.kind = "local-hash";
      t.dim = parsed->first;
      t.tem_seed = parsed->second;
      t.cache_path = resolve_str(cache, cfg, "cache_path", "");
      return t;
    }
    throw Error(ErrorCode::ConfigError,
                "cannot rebuild embedder '" + meta.tem_id +
                    "' from the checkpoint; pass --tem/--tem-dim");
  }
};

// ---- manifest ----------------------------------------------------------------

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

struct Manifest {
  std::string command;
  std::string config_digest;
  std::vector<std::pair<std::string, std::string>> inputs;  // path -> sha256
  std::uint64_t seed = 0;
  std::string tem_id;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> timings_ms;
};

void write_manifest(const Manifest& m, const std::string& out_dir) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_digest"] = m.config_digest;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [path, digest] : m.inputs) inputs[path] = digest;
  j["input_digests"] = std::move(inputs);
  j["seed"] = m.seed;
  j["tem_id"] = m.tem_id;
  j["outputs"] = m.outputs;
  nlohmann::json timings = nlohmann::json::object();
  for (const auto& [name, val] : m.timings_ms) timings[name] = val;
  j["timings_ms"] = std::move(timings);

  const std::string path = out_dir + "/manifest.json";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  f << j.dump(2) << "\n";
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---- shared loading ----------------------------------------------------------

Domain load_domain_dir(const std::string& dir) {
  const std::string name = fs::path(dir).filename().string();
  return load_domain(dir + "/records.csv", dir + "/qmatrix.csv", dir + "/names.csv",
                     name.empty() ? dir : name);
}

void add_domain_inputs(Manifest& m, const std::string& dir) {
  for (const char* f : {"records.csv", "qmatrix.csv", "names.csv"}) {
    const std::string p = dir + "/" + std::string(f);
    m.inputs.emplace_back(p, file_sha256_hex(p));
  }
}

int require_min_responses(const FlagVal<int>& f, const ConfigMap& cfg) {
  if (f.given()) return f.v;
  const auto it = cfg.find("min_responses");
  if (it == cfg.end())
    throw Error(ErrorCode::ConfigError,
                "min_responses is required (flag --min-responses or config key)");
  return static_cast<int>(to_ll(it->second, "min_responses"));
}

// ---- commands ----------------------------------------------------------------

struct SynthCmd {
  std::string config_path, out;
  FlagVal<std::uint64_t> seed;

  int run(const std::string& cmdline) const {
    const ConfigMap cfg = load_config(config_path);
    SynthConfig sc;
    sc.n_domains = resolve_int({}, cfg, "n_domains", sc.n_domains);
    sc.n_students = resolve_int({}, cfg, "n_students", sc.n_students);
    sc.n_exercises = resolve_int({}, cfg, "n_exercises", sc.n_exercises);
    sc.n_concepts = resolve_int({}, cfg, "n_concepts", sc.n_concepts);
    sc.responses_per_student =
        resolve_int({}, cfg, "responses_per_student", sc.responses_per_student);
    sc.shared_vocab_fraction =
        resolve_dbl({}, cfg, "shared_vocab_fraction", sc.shared_vocab_fraction);
    sc.latent_dim = resolve_int({}, cfg, "latent_dim", sc.latent_dim);
    sc.guess = resolve_dbl({}, cfg, "guess", sc.guess);
    sc.slip = resolve_dbl({}, cfg, "slip", sc.slip);
    sc.difficulty_shift = resolve_dbl({}, cfg, "difficulty_shift", sc.difficulty_shift);
    sc.min_concepts_per_exercise =
        resolve_int({}, cfg, "min_concepts_per_exercise", sc.min_concepts_per_exercise);
    sc.max_concepts_per_exercise =
        resolve_int({}, cfg, "max_concepts_per_exercise", sc.max_concepts_per_exercise);
    sc.seed = resolve_seed(seed, cfg);

    Manifest man;
    man.command = cmdline;
    man.config_digest = config_path.empty() ? sha256_hex("") : file_sha256_hex(config_path);
    if (!config_path.empty())
      man.inputs.emplace_back(config_path, man.config_digest);
    man.seed = sc.seed;

    const Stopwatch gen_sw;
    const SynthData data = generate(sc);
    man.timings_ms.emplace_back("generate", gen_sw.ms());

    const Stopwatch write_sw;
    fs::create_directories(out);
    for (const auto& sd : data.domains) {
      const std::string dir = out + "/" + sd.domain.name;
      write_domain_files(sd.domain, dir);
      for (const char* f : {"records.csv", "qmatrix.csv", "names.csv"})
        man.outputs.push_back(dir + "/" + std::string(f));
      std::cout << sd.domain.name << ": " << sd.domain.n_students() << " students, "
                << sd.domain.n_exercises() << " exercises, " << sd.domain.n_concepts()
                << " concepts, " << sd.domain.records.size() << " records\n";
    }
    write_ground_truth(data, out + "/ground_truth.json");
    man.outputs.push_back(out + "/ground_truth.json");
    man.timings_ms.emplace_back("write", write_sw.ms());

    write_manifest(man, out);
    std::cout << "wrote " << out << "\n";
    return 0;
  }
};

struct TrainCmd {
  std::vector<std::string> dirs;
  std::string config_path, out;
  FlagVal<std::uint64_t> seed;
  FlagVal<int> min_responses, d, batch_size, max_epochs, patience, head_hidden;
  FlagVal<double> lr;
  FlagVal<std::string> cdm, ablation, mapper_hidden, weights;
  FlagVal<bool> pooled;
  TemFlags tem;

  int run(const std::string& cmdline) const {
    const ConfigMap cfg = load_config(config_path);
    const std::uint64_t run_seed = resolve_seed(seed, cfg);
    const int min_resp = require_min_responses(min_responses, cfg);

    TrainConfig tc;
    tc.seed = run_seed;
    tc.d = resolve_int(d, cfg, "d", tc.d);
    tc.head_hidden = resolve_int(head_hidden, cfg, "head_hidden", tc.head_hidden);
    tc.batch_size = resolve_int(batch_size, cfg, "batch_size", tc.batch_size);
    tc.learning_rate = resolve_dbl(lr, cfg, "learning_rate", tc.learning_rate);
    tc.max_epochs = resolve_int(max_epochs, cfg, "max_epochs", tc.max_epochs);
    tc.patience = resolve_int(patience, cfg, "patience", tc.patience);
    tc.variant = parse_cdm_variant(resolve_str(cdm, cfg, "cdm", "kancd"));
    tc.ablation = parse_ablation(resolve_str(ablation, cfg, "ablation", "none"));
    tc.pooled_validation = resolve_bool(pooled, cfg, "pooled_validation", false);
    const std::string hidden_csv =
        resolve_str(mapper_hidden, cfg, "mapper_hidden", "512,256");
    tc.mapper_hidden.clear();
    for (const auto& h : split_commas(hidden_csv))
      tc.mapper_hidden.push_back(static_cast<int>(to_ll(h, "mapper_hidden")));
    const std::string weights_csv = resolve_str(weights, cfg, "domain_weights", "");
    for (const auto& w : split_commas(weights_csv))
      tc.domain_weights.push_back(to_dbl(w, "domain_weights"));

    Manifest man;
    man.command = cmdline;
    man.config_digest = config_path.empty() ? sha256_hex("") : file_sha256_hex(config_path);
    if (!config_path.empty()) man.inputs.emplace_back(config_path, man.config_digest);
    man.seed = run_seed;

    const Stopwatch load_sw;
    std::vector<SplitDomain> splits;
    for (const auto& dir : dirs) {
      add_domain_inputs(man, dir);
      splits.push_back(preprocess(load_domain_dir(dir), min_resp, run_seed));
    }
    man.timings_ms.emplace_back("load", load_sw.ms());

    const Stopwatch embed_sw;
    const TemOptions topt = tem.resolve(cfg);
    TemBundle bundle;
    std::vector<DomainVectors> vectors;
    if (tc.ablation == Ablation::no_tcp) {
      // Profile-free baseline: stand-in vectors at the embedder's dimension.
      for (const auto& sp : splits)
        vectors.push_back(random_vectors(sp.domain, topt.dim, run_seed));
    } else {
      bundle = build_tem(topt);
      for (const auto& sp : splits)
        vectors.push_back(embed_domain(bundle.tem(), sp.domain, build_domain_profiles(sp)));
    }
    man.tem_id = vectors.front().tem_id;
    man.timings_ms.emplace_back("embed", embed_sw.ms());

    fs::create_directories(out);
    std::ofstream log(out + "/train_log.jsonl", std::ios::trunc);
    if (!log) throw Error(ErrorCode::IoError, "cannot write " + out + "/train_log.jsonl");
    tc.epoch_log = &log;

    const Stopwatch train_sw;
    const TrainedModel model = train_multi_domain(splits, vectors, tc);
    man.timings_ms.emplace_back("train", train_sw.ms());

    const Stopwatch save_sw;
    save_checkpoint(model, out + "/model.ckpt");
    man.outputs.push_back(out + "/model.ckpt");
    man.outputs.push_back(out + "/train_log.jsonl");
    man.timings_ms.emplace_back("save", save_sw.ms());
    write_manifest(man, out);

    std::cout << "trained " << to_string(model.params.cdm.variant) << " on "
              << splits.size() << " domain(s), d=" << model.meta.d
              << ", mean val auc=" << fmt17(model.meta.val_auc_mean) << "\n"
              << "checkpoint: " << out << "/model.ckpt\n";
    return 0;
  }
};

struct DiagnoseCmd {
  std::string checkpoint, target_dir, config_path, out;
  FlagVal<std::uint64_t> seed;
  FlagVal<int> min_responses;
  FlagVal<bool> doa_weighted;
  FlagVal<std::string> doa_scope;
  TemFlags tem;

  int run(const std::string& cmdline) const {
    const ConfigMap cfg = load_config(config_path);
    const std::uint64_t run_seed = resolve_seed(seed, cfg);
    const int min_resp = require_min_responses(min_responses, cfg);
    const std::string scope = resolve_str(doa_scope, cfg, "doa_scope", "test");
    if (scope != "test" && scope != "all")
      throw Error(ErrorCode::ConfigError, "doa_scope must be test or all");

    Manifest man;
    man.command = cmdline;
    man.config_digest = config_path.empty() ? sha256_hex("") : file_sha256_hex(config_path);
    if (!config_path.empty()) man.inputs.emplace_back(config_path, man.config_digest);
    man.seed = run_seed;
    man.inputs.emplace_back(checkpoint, file_sha256_hex(checkpoint));
    add_domain_inputs(man, target_dir);

    const Stopwatch load_sw;
    const TrainedModel model = load_checkpoint(checkpoint);
    const SplitDomain target = preprocess(load_domain_dir(target_dir), min_resp, run_seed);
    man.timings_ms.emplace_back("load", load_sw.ms());

    TemBundle bundle;
    if (model.meta.ablation == Ablation::no_tcp) {
      // Inference regenerates the stand-in vectors itself; the embedder slot
      // just satisfies the call signature.
      bundle.backend =
          std::make_unique<LocalHashEmbedder>(std::max(8, model.meta.d_l), 0);
      man.tem_id = model.meta.tem_id;
    } else {
      bundle = build_tem(tem.resolve_for(model.meta, cfg));
      man.tem_id = bundle.tem().id();
    }

    const Stopwatch diag_sw;
    const TargetDiagnosis diag = diagnose_target(model, target, bundle.tem(), target.test);
    man.timings_ms.emplace_back("diagnose", diag_sw.ms());

    const Stopwatch eval_sw;
    DoaOptions dopt;
    dopt.weighted = resolve_bool(doa_weighted, cfg, "doa_weighted", false);
    dopt.exhaustive_limit =
        resolve_int({}, cfg, "doa_exhaustive_limit", dopt.exhaustive_limit);
    dopt.sampled_pairs = static_cast<std::size_t>(resolve_int(
        {}, cfg, "doa_sampled_pairs", static_cast<int>(dopt.sampled_pairs)));
    dopt.seed = run_seed;
    std::span<const ResponseRecord> doa_records =
        scope == "all" ? std::span<const ResponseRecord>(target.domain.records)
                       : std::span<const ResponseRecord>(target.test);
    const EvalReport report =
        evaluate(model.params, diag.cog, target.domain, target.test, doa_records, dopt);
    man.timings_ms.emplace_back("evaluate", eval_sw.ms());

    const Stopwatch write_sw;
    fs::create_directories(out);
    {
      std::ofstream f(out + "/predictions.csv", std::ios::trunc);
      if (!f) throw Error(ErrorCode::IoError, "cannot write predictions.csv");
      f << "student_id,exercise_id,y_true,p_hat\n";
      for (std::size_t i = 0; i < target.test.size(); ++i)
        f << target.test[i].student_id << ',' << target.test[i].exercise_id << ','
          << target.test[i].score << ',' << fmt17(diag.predictions[i]) << '\n';
    }
    {
      std::ofstream f(out + "/mastery.csv", std::ios::trunc);
      if (!f) throw Error(ErrorCode::IoError, "cannot write mastery.csv");
      f << "student_id,concept_id,mastery\n";
      for (int s = 0; s < target.domain.n_students(); ++s)
        for (int k = 0; k < target.domain.n_concepts(); ++k)
          f << target.domain.students[static_cast<std::size_t>(s)] << ','
            << target.domain.concepts[static_cast<std::size_t>(k)] << ','
            << fmt17(diag.mastery(s, k)) << '\n';
    }
    {
      nlohmann::json j;
      j["auc"] = report.auc;
      j["doa"] = report.doa;
      j["n_records"] = report.n_records;
      j["n_doa_concepts"] = report.n_doa_concepts;
      j["seed"] = run_seed;
      j["model_digest"] = diag.model_digest;
      std::ofstream f(out + "/metrics.json", std::ios::trunc);
      if (!f) throw Error(ErrorCode::IoError, "cannot write metrics.json");
      f << j.dump(2) << "\n";
    }
    man.outputs = {out + "/predictions.csv", out + "/mastery.csv", out + "/metrics.json"};
    man.timings_ms.emplace_back("write", write_sw.ms());
    write_manifest(man, out);

    std::cout << "auc=" << fmt17(report.auc) << " doa=" << fmt17(report.doa) << " on "
              << report.n_records << " test records (" << report.n_doa_concepts
              << " doa concepts)\n";
    return 0;
  }
};

struct EditCmd {
  std::string checkpoint, target_dir, student_id, edits_file, config_path, out;
  FlagVal<std::uint64_t> seed;
  FlagVal<int> min_responses;
  FlagVal<double> alpha;
  TemFlags tem;

  int run(const std::string& cmdline) const {
    const ConfigMap cfg = load_config(config_path);
    const std::uint64_t run_seed = resolve_seed(seed, cfg);
    const int min_resp = require_min_responses(min_responses, cfg);
    const double a = resolve_dbl(alpha, cfg, "alpha", 0.7);

    const TrainedModel model = load_checkpoint(checkpoint);
    if (model.meta.ablation == Ablation::no_tcp)
      throw Error(ErrorCode::ConfigError,
                  "profile editing needs textual profiles; model was trained without them");
    const SplitDomain target = preprocess(load_domain_dir(target_dir), min_resp, run_seed);
    TemBundle bundle = build_tem(tem.resolve_for(model.meta, cfg));

    const auto sit = target.domain.student_index.find(student_id);
    if (sit == target.domain.student_index.end())
      throw Error(ErrorCode::DanglingReference,
                  "student '" + student_id + "' not in target domain");
    const DomainProfiles profiles = build_domain_profiles(target);
    const auto& old_interactions =
        profiles.students[static_cast<std::size_t>(sit->second)].interactions;

    // edits: one "concept name, correct|incorrect" per line
    std::ifstream ef(edits_file);
    if (!ef) throw Error(ErrorCode::ConfigError, "cannot read edits file " + edits_file);
    std::map<std::string, int> name_to_k;
    for (int k = 0; k < target.domain.n_concepts(); ++k)
      name_to_k.emplace(target.domain.concept_names[static_cast<std::size_t>(k)], k);
    std::vector<InteractionProfile> new_interactions;
    std::set<int> edited;
    std::string line;
    int lineno = 0;
    while (std::getline(ef, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto comma = t.rfind(',');
      if (comma == std::string::npos)
        throw Error(ErrorCode::ConfigError, edits_file + ":" + std::to_string(lineno) +
                                                ": expected 'concept name, correct|incorrect'");
      const std::string name = trim(t.substr(0, comma));
      const std::string verdict = trim(t.substr(comma + 1));
      int score = 0;
      if (verdict == "correct")
        score = 1;
      else if (verdict == "incorrect")
        score = 0;
      else
        throw Error(ErrorCode::ConfigError, edits_file + ":" + std::to_string(lineno) +
                                                ": verdict must be correct or incorrect");
      const auto kit = name_to_k.find(name);
      if (kit == name_to_k.end())
        throw Error(ErrorCode::DanglingReference,
                    "concept '" + name + "' not in target domain");
      const int k = kit->second;
      edited.insert(k);

      // ACR for a hypothetical exercise on this concept: mean train ACR of
      // the concept's exercises, domain mean when it has none.
      double acr_sum = 0.0;
      int acr_n = 0;
      for (int e = 0; e < target.domain.n_exercises(); ++e) {
        const auto& q = target.domain.q[static_cast<std::size_t>(e)];
        if (std::find(q.begin(), q.end(), k) == q.end()) continue;
        acr_sum += profiles.acr.acr[static_cast<std::size_t>(e)];
        ++acr_n;
      }
      const double acr_val = acr_n ? acr_sum / acr_n : profiles.acr.domain_mean;

      InteractionProfile ip;
      ip.student_id = student_id;
      ip.exercise_id = "edit:" + std::to_string(lineno);
      ip.score = score;
      ip.text = render_interaction_profile({name}, acr_val, score);
      new_interactions.push_back(std::move(ip));
    }
    if (new_interactions.empty())
      throw Error(ErrorCode::EmptyEdit, "edits file has no edit lines");

    const TargetDiagnosis diag =
        diagnose_target(model, target, bundle.tem(), std::span<const ResponseRecord>{});

    std::vector<ResponseRecord> probe;
    for (int e = 0; e < target.domain.n_exercises(); ++e) {
      const auto& q = target.domain.q[static_cast<std::size_t>(e)];
      if (std::none_of(q.begin(), q.end(), [&](int k) { return edited.count(k); }))
        continue;
      ResponseRecord r;
      r.student_id = student_id;
      r.exercise_id = target.domain.exercises[static_cast<std::size_t>(e)];
      probe.push_back(std::move(r));
    }

    const EditOutcome outcome = edit_profile(model, target, diag, old_interactions,
                                             new_interactions, bundle.tem(), probe, a);

    nlohmann::json j;
    j["student_id"] = student_id;
    j["alpha"] = a;
    j["model_digest"] = diag.model_digest;
    nlohmann::json before = nlohmann::json::array(), after = nlohmann::json::array();
    for (int k = 0; k < target.domain.n_concepts(); ++k) {
      const auto ks = static_cast<std::size_t>(k);
      before.push_back({{"concept_id", target.domain.concepts[ks]},
                        {"name", target.domain.concept_names[ks]},
                        {"mastery", outcome.mastery_before[k]}});
      after.push_back({{"concept_id", target.domain.concepts[ks]},
                       {"name", target.domain.concept_names[ks]},
                       {"mastery", outcome.mastery_after[k]}});
    }
    j["mastery_before"] = std::move(before);
    j["mastery_after"] = std::move(after);
    nlohmann::json preds = nlohmann::json::array();
    for (std::size_t i = 0; i < probe.size(); ++i)
      preds.push_back({{"exercise_id", probe[i].exercise_id},
                       {"p_before", outcome.predictions_before[i]},
                       {"p_after", outcome.predictions_after[i]}});
    j["predictions"] = std::move(preds);

    std::cout << j.dump(2) << "\n";
    if (!out.empty()) {
      fs::create_directories(out);
      std::ofstream f(out + "/edit.json", std::ios::trunc);
      if (!f) throw Error(ErrorCode::IoError, "cannot write edit.json");
      f << j.dump(2) << "\n";

      Manifest man;
      man.command = cmdline;
      man.config_digest =
          config_path.empty() ? sha256_hex("") : file_sha256_hex(config_path);
      if (!config_path.empty()) man.inputs.emplace_back(config_path, man.config_digest);
      man.inputs.emplace_back(checkpoint, file_sha256_hex(checkpoint));
      add_domain_inputs(man, target_dir);
      man.inputs.emplace_back(edits_file, file_sha256_hex(edits_file));
      man.seed = run_seed;
      man.tem_id = bundle.tem().id();
      man.outputs = {out + "/edit.json"};
      write_manifest(man, out);
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-domain cognitive diagnosis from response logs"};
  app.require_subcommand(1);
  const std::string cmdline = join_args(argc, argv);

  SynthCmd synth;
  auto* s_synth = app.add_subcommand("synth", "generate a synthetic multi-domain corpus");
  s_synth->add_option("--config", synth.config_path, "flat key=value config file")
      ->check(CLI::ExistingFile);
  s_synth->add_option("--out", synth.out, "output directory")->required();
  synth.seed.o = s_synth->add_option("--seed", synth.seed.v, "master seed");

  TrainCmd train;
  auto* s_train = app.add_subcommand("train", "train on one or more source domains");
  s_train->add_option("dirs", train.dirs, "source domain directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  s_train->add_option("--config", train.config_path, "flat key=value config file")
      ->check(CLI::ExistingFile);
  s_train->add_option("--out", train.out, "output directory")->required();
  train.seed.o = s_train->add_option("--seed", train.seed.v, "master seed");
  train.min_responses.o = s_train->add_option("--min-responses", train.min_responses.v,
                                              "drop students with fewer records");
  train.d.o = s_train->add_option("--d", train.d.v, "cognitive dimension");
  train.batch_size.o = s_train->add_option("--batch-size", train.batch_size.v, "");
  train.max_epochs.o = s_train->add_option("--max-epochs", train.max_epochs.v, "");
  train.patience.o = s_train->add_option("--patience", train.patience.v, "");
  train.head_hidden.o = s_train->add_option("--head-hidden", train.head_hidden.v, "");
  train.lr.o = s_train->add_option("--lr", train.lr.v, "learning rate");
  train.cdm.o = s_train->add_option("--cdm", train.cdm.v, "mirt, ncdm or kancd");
  train.ablation.o =
      s_train->add_option("--ablation", train.ablation.v, "none, no_tcp or no_lcm");
  train.mapper_hidden.o = s_train->add_option("--mapper-hidden", train.mapper_hidden.v,
                                              "comma-separated hidden sizes");
  train.weights.o =
      s_train->add_option("--weights", train.weights.v, "comma-separated domain weights");
  train.pooled.o = s_train->add_flag("--pooled-validation", train.pooled.v,
                                     "pool validation records across domains");
  train.tem.attach(s_train);

  DiagnoseCmd diag;
  auto* s_diag = app.add_subcommand("diagnose", "zero-shot diagnosis of a target domain");
  s_diag->add_option("checkpoint", diag.checkpoint, "trained model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  s_diag->add_option("target", diag.target_dir, "target domain directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  s_diag->add_option("--config", diag.config_path, "flat key=value config file")
      ->check(CLI::ExistingFile);
  s_diag->add_option("--out", diag.out, "output directory")->required();
  diag.seed.o = s_diag->add_option("--seed", diag.seed.v, "target split seed");
  diag.min_responses.o = s_diag->add_option("--min-responses", diag.min_responses.v,
                                            "drop students with fewer records");
  diag.doa_weighted.o = s_diag->add_flag("--doa-weighted", diag.doa_weighted.v,
                                         "weight concepts by valid pair count");
  diag.doa_scope.o =
      s_diag->add_option("--doa-scope", diag.doa_scope.v, "doa records: test or all");
  diag.tem.attach(s_diag);

  EditCmd edit;
  auto* s_edit = app.add_subcommand("edit", "what-if profile edit for one student");
  s_edit->add_option("checkpoint", edit.checkpoint, "trained model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  s_edit->add_option("target", edit.target_dir, "target domain directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  s_edit->add_option("student", edit.student_id, "student id")->required();
  s_edit->add_option("edits", edit.edits_file, "file of 'concept name, correct|incorrect' lines")
      ->required()
      ->check(CLI::ExistingFile);
  s_edit->add_option("--config", edit.config_path, "flat key=value config file")
      ->check(CLI::ExistingFile);
  s_edit->add_option("--out", edit.out, "optional output directory");
  edit.seed.o = s_edit->add_option("--seed", edit.seed.v, "target split seed");
  edit.min_responses.o = s_edit->add_option("--min-responses", edit.min_responses.v,
                                            "drop students with fewer records");
  edit.alpha.o = s_edit->add_option("--alpha", edit.alpha.v, "old:new blend in [0,1]");
  edit.tem.attach(s_edit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s_synth) return synth.run(cmdline);
    if (*s_train) return train.run(cmdline);
    if (*s_diag) return diag.run(cmdline);
    if (*s_edit) return edit.run(cmdline);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
