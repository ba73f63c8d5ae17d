#include "crosscog/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "crosscog/metrics.hpp"
#include "crosscog/rng.hpp"
#include "json.hpp"

namespace crosscog {
namespace {

// wordpool-v2: 500 terms, all lowercase single tokens.
constexpr const char* kWordPool[] = {
    "addition", "subtraction", "multiplication", "division", "fraction", "decimal",
    "percentage", "ratio", "proportion", "algebra",
    "equation", "inequality", "polynomial", "quadratic", "exponent", "logarithm",
    "radical", "function", "slope", "intercept",
    "matrix", "determinant", "vector", "angle", "triangle", "circle", "polygon",
    "perimeter", "area", "volume",
    "symmetry", "congruence", "similarity", "trigonometry", "sine", "cosine",
    "tangent", "derivative", "integral", "limit",
    "sequence", "series", "probability", "statistics", "mean", "median", "mode",
    "variance", "deviation", "permutation",
    "combination", "factorial", "prime", "factor", "multiple", "divisor",
    "remainder", "modulus", "integer", "rational",
    "irrational", "complex", "imaginary", "infinity", "subset", "union",
    "intersection", "complement", "logic", "proof",
    "induction", "theorem", "axiom", "corollary", "lemma", "conjecture",
    "hypothesis", "estimation", "rounding", "measurement",
    "conversion", "scale", "coordinate", "plane", "axis", "origin", "quadrant",
    "translation", "rotation", "reflection",
    "dilation", "tessellation", "fractal", "topology", "interpolation",
    "extrapolation", "optimization", "minimum", "maximum", "gradient",
    "curvature", "asymptote", "continuity", "convergence", "divergence",
    "summation", "binomial", "monomial", "coefficient", "constant",
    "variable", "expression", "substitution", "elimination", "factoring",
    "expansion", "commutative", "associative", "identity", "inverse",
    "reciprocal", "absolute", "magnitude", "numerator", "denominator", "quotient",
    "product", "dividend", "minuend", "addend",
    "motion", "velocity", "acceleration", "force", "momentum", "inertia",
    "gravity", "friction", "energy", "work",
    "power", "pressure", "density", "buoyancy", "torque", "equilibrium",
    "oscillation", "wave", "frequency", "amplitude",
    "wavelength", "resonance", "sound", "optics", "lens", "prism", "refraction",
    "diffraction", "interference", "polarization",
    "electricity", "current", "voltage", "resistance", "capacitance",
    "inductance", "circuit", "conductor", "insulator", "semiconductor",
    "magnetism", "electromagnet", "flux", "generator", "motor", "transformer",
    "relativity", "quantum", "photon", "electron",
    "proton", "neutron", "nucleus", "isotope", "radioactivity", "fission",
    "fusion", "thermodynamics", "entropy", "enthalpy",
    "conduction", "convection", "radiation", "temperature", "heat", "calorie",
    "pendulum", "projectile", "trajectory", "orbit",
    "atom", "molecule", "element", "compound", "mixture", "solution", "solvent",
    "solute", "concentration", "molarity",
    "acid", "base", "alkali", "salt", "oxidation", "reduction", "electrolysis",
    "catalyst", "enzyme", "inhibitor",
    "polymer", "monomer", "isomer", "hydrocarbon", "alkane", "alkene", "alkyne",
    "alcohol", "ester", "ether",
    "aldehyde", "ketone", "carboxyl", "amine", "amide", "benzene", "aromatic",
    "valence", "electronegativity", "ionization",
    "crystallization", "distillation", "filtration", "chromatography",
    "titration", "precipitation", "sublimation", "evaporation", "condensation",
    "combustion",
    "stoichiometry", "mole", "avogadro", "periodicity", "halogen", "lanthanide",
    "actinide", "metalloid", "allotrope", "chirality",
    "cell", "membrane", "cytoplasm", "mitochondria", "ribosome", "chloroplast",
    "photosynthesis", "respiration", "osmosis", "diffusion",
    "mitosis", "meiosis", "chromosome", "gene", "allele", "genotype",
    "phenotype", "heredity", "mutation", "adaptation",
    "evolution", "selection", "speciation", "taxonomy", "kingdom", "phylum",
    "genus", "species", "ecosystem", "habitat",
    "biome", "population", "community", "symbiosis", "parasitism", "predation",
    "herbivore", "carnivore", "omnivore", "decomposer",
    "bacteria", "virus", "fungus", "protist", "algae", "invertebrate",
    "vertebrate", "mammal", "reptile", "amphibian",
    "digestion", "circulation", "immunity", "hormone", "neuron", "synapse",
    "reflex", "stimulus", "receptor", "metabolism",
    "protein", "carbohydrate", "lipid", "vitamin", "mineral", "nutrient",
    "glucose", "insulin", "hemoglobin", "antibody",
    "geology", "crystal", "quartz", "igneous", "sedimentary", "metamorphic",
    "erosion", "weathering", "deposition", "sediment",
    "earthquake", "volcano", "magma", "lava", "tectonics", "continent", "crust",
    "mantle", "core", "lithosphere",
    "atmosphere", "troposphere", "stratosphere", "humidity", "climate",
    "weather", "cyclone", "monsoon", "tornado", "hurricane",
    "glacier", "iceberg", "tundra", "desert", "savanna", "prairie", "delta",
    "estuary", "watershed", "aquifer",
    "latitude", "longitude", "equator", "meridian", "hemisphere", "altitude",
    "contour", "cartography", "compass", "navigation",
    "astronomy", "planet", "asteroid", "comet", "meteor", "galaxy", "nebula",
    "supernova", "constellation", "eclipse",
    "solstice", "equinox", "lunar", "solar", "satellite", "telescope",
    "spectrum", "parallax", "lightyear", "cosmology",
    "algorithm", "recursion", "iteration", "loop", "array", "stack", "queue",
    "tree", "heap", "hash",
    "pointer", "string", "boolean", "byte", "bit", "binary", "octal",
    "hexadecimal", "compiler", "interpreter",
    "syntax", "semantics", "debugging", "encryption", "decryption", "cipher",
    "protocol", "bandwidth", "latency", "database",
    "query", "index", "sorting", "searching", "complexity", "automaton",
    "grammar", "parsing", "token", "operand",
    "noun", "verb", "adjective", "adverb", "pronoun", "preposition",
    "conjunction", "interjection", "clause", "phrase",
    "subject", "predicate", "object", "tense", "participle", "gerund",
    "infinitive", "syllable", "phoneme", "morpheme",
    "metaphor", "simile", "alliteration", "onomatopoeia", "hyperbole",
    "personification", "irony", "allegory", "sonnet", "stanza",
    "civilization", "empire", "dynasty", "revolution", "constitution",
    "democracy", "republic", "monarchy", "feudalism", "renaissance",
    "reformation", "industrialization", "colonialism", "nationalism",
    "capitalism", "socialism", "inflation", "recession", "tariff", "commodity",
    "supply", "demand", "scarcity", "budget", "interest", "arbitrage", "equity",
    "liability", "asset", "ledger",
};

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

void validate(const SynthConfig& cfg) {
  if (cfg.n_domains < 1 || cfg.n_students < 1 || cfg.n_exercises < 1 ||
      cfg.n_concepts < 1 || cfg.latent_dim < 1)
    throw Error(ErrorCode::ConfigError, "synth counts must be positive");
  if (cfg.shared_vocab_fraction < 0.0 || cfg.shared_vocab_fraction > 1.0)
    throw Error(ErrorCode::ConfigError, "shared_vocab_fraction must be in [0,1]");
  if (cfg.guess < 0.0 || cfg.guess >= 1.0 || cfg.slip < 0.0 || cfg.slip >= 1.0 ||
      cfg.guess + cfg.slip >= 1.0)
    throw Error(ErrorCode::ConfigError, "guess/slip rates out of range");
  if (cfg.min_concepts_per_exercise < 1 ||
      cfg.min_concepts_per_exercise > cfg.max_concepts_per_exercise ||
      cfg.max_concepts_per_exercise > cfg.n_concepts)
    throw Error(ErrorCode::ConfigError, "concepts-per-exercise range invalid");
  if (cfg.responses_per_student < 1 || cfg.responses_per_student > cfg.n_exercises)
    throw Error(ErrorCode::ConfigError,
                "responses_per_student must be in [1, n_exercises]");
  const std::size_t shared = static_cast<std::size_t>(
      std::lround(cfg.shared_vocab_fraction * cfg.n_concepts));
  const std::size_t needed =
      shared + static_cast<std::size_t>(cfg.n_domains) *
                   (static_cast<std::size_t>(cfg.n_concepts) - shared);
  if (needed > std::size(kWordPool))
    throw Error(ErrorCode::ConfigError, "word pool too small for this config");
}

// Unit-norm loading anchored on a shared direction; the per-name part is a
// function of the name alone so shared names agree across domains.
VecD name_loading(const std::string& name, int latent_dim) {
  constexpr double kSpread = 0.25;
  VecD u = VecD::Constant(latent_dim, 1.0 / std::sqrt(static_cast<double>(latent_dim)));
  auto rng = make_rng(fnv1a64(name), 0xE7Aull);
  std::normal_distribution<double> normal(0.0, 1.0);
  VecD eta(latent_dim);
  for (int i = 0; i < latent_dim; ++i) eta[i] = normal(rng);
  VecD v = u + kSpread * eta;
  return v / v.norm();
}

}  // namespace

std::span<const char* const> word_pool() {
  return {kWordPool, std::size(kWordPool)};
}

SynthData generate(const SynthConfig& cfg) {
  validate(cfg);
  SynthData data;
  data.config = cfg;

  const int K = cfg.n_concepts;
  const int S = cfg.n_students;
  const int E = cfg.n_exercises;
  const int L = cfg.latent_dim;
  const int shared = static_cast<int>(std::lround(cfg.shared_vocab_fraction * K));

  std::vector<int> pool_order(std::size(kWordPool));
  std::iota(pool_order.begin(), pool_order.end(), 0);
  auto pool_rng = make_rng(cfg.seed, 1);
  seeded_shuffle(pool_order, pool_rng);
  std::size_t pool_cursor = static_cast<std::size_t>(shared);

  for (int m = 0; m < cfg.n_domains; ++m) {
    const std::string dm = "d" + std::to_string(m + 1);

    // concept names: shared block first, then this domain's own terms
    std::vector<std::pair<std::string, std::string>> names;  // (id, name)
    for (int k = 0; k < K; ++k) {
      std::string name;
      if (k < shared) {
        name = kWordPool[pool_order[static_cast<std::size_t>(k)]];
      } else {
        name = kWordPool[pool_order[pool_cursor++]];
      }
      names.emplace_back(dm + "_c" + std::to_string(k), name);
    }

    MatD loadings_gen(L, K);
    for (int k = 0; k < K; ++k)
      loadings_gen.col(k) = name_loading(names[static_cast<std::size_t>(k)].second, L);

    MatD theta_gen(L, S);
    {
      auto rng = make_rng(cfg.seed, 100 + static_cast<std::uint64_t>(m));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int s = 0; s < S; ++s)
        for (int l = 0; l < L; ++l) theta_gen(l, s) = normal(rng);
    }

    VecD b_gen(E), a_gen(E);
    {
      auto rng = make_rng(cfg.seed, 200 + static_cast<std::uint64_t>(m));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> disc(0.75, 1.25);
      for (int e = 0; e < E; ++e) {
        b_gen[e] = normal(rng) + cfg.difficulty_shift;
        a_gen[e] = disc(rng);
      }
    }

    // q links per exercise, then patch coverage so every concept is asked
    std::vector<std::pair<std::string, std::string>> q_links;  // (exercise, concept)
    std::vector<std::vector<int>> q_gen(static_cast<std::size_t>(E));
    {
      auto rng = make_rng(cfg.seed, 300 + static_cast<std::uint64_t>(m));
      const int span_c =
          cfg.max_concepts_per_exercise - cfg.min_concepts_per_exercise + 1;
      std::vector<int> ks(static_cast<std::size_t>(K));
      std::iota(ks.begin(), ks.end(), 0);
      for (int e = 0; e < E; ++e) {
        const int n_c = cfg.min_concepts_per_exercise +
                        static_cast<int>(rng() % static_cast<std::uint64_t>(span_c));
        seeded_shuffle(ks, rng);
        q_gen[static_cast<std::size_t>(e)].assign(ks.begin(), ks.begin() + n_c);
        std::sort(q_gen[static_cast<std::size_t>(e)].begin(),
                  q_gen[static_cast<std::size_t>(e)].end());
      }
      std::vector<char> covered(static_cast<std::size_t>(K), 0);
      for (const auto& row : q_gen)
        for (int k : row) covered[static_cast<std::size_t>(k)] = 1;
      for (int k = 0; k < K; ++k) {
        if (covered[static_cast<std::size_t>(k)]) continue;
        auto& row = q_gen[static_cast<std::size_t>(k % E)];
        row.push_back(k);
        std::sort(row.begin(), row.end());
      }
      for (int e = 0; e < E; ++e)
        for (int k : q_gen[static_cast<std::size_t>(e)])
          q_links.emplace_back(dm + "_e" + std::to_string(e),
                               names[static_cast<std::size_t>(k)].first);
    }

    // true probabilities over the full student x exercise grid
    MatD prob_gen(S, E);
    for (int e = 0; e < E; ++e) {
      VecD v_e = VecD::Zero(L);
      for (int k : q_gen[static_cast<std::size_t>(e)]) v_e += loadings_gen.col(k);
      v_e /= static_cast<double>(q_gen[static_cast<std::size_t>(e)].size());
      for (int s = 0; s < S; ++s) {
        const double sig = sigmoid(a_gen[e] * (theta_gen.col(s).dot(v_e) - b_gen[e]));
        prob_gen(s, e) = (1.0 - cfg.slip) * sig + cfg.guess * (1.0 - sig);
      }
    }

    // responses: each student answers a seeded sample of exercises once
    std::vector<ResponseRecord> records;
    records.reserve(static_cast<std::size_t>(S) *
                    static_cast<std::size_t>(cfg.responses_per_student));
    {
      auto rng = make_rng(cfg.seed, 400 + static_cast<std::uint64_t>(m));
      std::vector<int> es(static_cast<std::size_t>(E));
      for (int s = 0; s < S; ++s) {
        std::iota(es.begin(), es.end(), 0);
        seeded_shuffle(es, rng);
        for (int t = 0; t < cfg.responses_per_student; ++t) {
          const int e = es[static_cast<std::size_t>(t)];
          ResponseRecord rec;
          rec.student_id = dm + "_s" + std::to_string(s);
          rec.exercise_id = dm + "_e" + std::to_string(e);
          rec.score = uniform01(rng) < prob_gen(s, e) ? 1 : 0;
          rec.order_index = t;
          records.push_back(std::move(rec));
        }
      }
    }

    SynthDomain sd;
    sd.domain =
        make_domain("domain" + std::to_string(m + 1), std::move(records), q_links, names);

    // reorder latent quantities into the domain's dense index space
    sd.theta.resize(L, S);
    sd.true_prob.resize(S, E);
    sd.difficulty.resize(E);
    sd.discrimination.resize(E);
    sd.loadings.resize(L, K);
    std::vector<int> s_of(static_cast<std::size_t>(S)), e_of(static_cast<std::size_t>(E));
    for (int s = 0; s < S; ++s)
      s_of[static_cast<std::size_t>(
          sd.domain.student_index.at(dm + "_s" + std::to_string(s)))] = s;
    for (int e = 0; e < E; ++e)
      e_of[static_cast<std::size_t>(
          sd.domain.exercise_index.at(dm + "_e" + std::to_string(e)))] = e;
    for (int s = 0; s < S; ++s) sd.theta.col(s) = theta_gen.col(s_of[static_cast<std::size_t>(s)]);
    for (int e = 0; e < E; ++e) {
      sd.difficulty[e] = b_gen[e_of[static_cast<std::size_t>(e)]];
      sd.discrimination[e] = a_gen[e_of[static_cast<std::size_t>(e)]];
    }
    for (int s = 0; s < S; ++s)
      for (int e = 0; e < E; ++e)
        sd.true_prob(s, e) =
            prob_gen(s_of[static_cast<std::size_t>(s)], e_of[static_cast<std::size_t>(e)]);
    for (int k = 0; k < K; ++k) {
      const int dense = sd.domain.concept_index.at(names[static_cast<std::size_t>(k)].first);
      sd.loadings.col(dense) = loadings_gen.col(k);
    }

    data.domains.push_back(std::move(sd));
  }
  return data;
}

MatD true_mastery(const SynthDomain& sd) {
  return sigmoid((sd.theta.transpose() * sd.loadings).array()).matrix();
}

double oracle_auc_bound(const SynthDomain& sd,
                        std::span<const ResponseRecord> records) {
  std::vector<double> p;
  std::vector<int> y;
  p.reserve(records.size());
  y.reserve(records.size());
  for (const auto& rec : records) {
    const auto si = sd.domain.student_index.find(rec.student_id);
    const auto ei = sd.domain.exercise_index.find(rec.exercise_id);
    if (si == sd.domain.student_index.end() || ei == sd.domain.exercise_index.end())
      throw Error(ErrorCode::DanglingReference,
                  "record does not belong to this synthetic domain");
    p.push_back(sd.true_prob(si->second, ei->second));
    y.push_back(rec.score);
  }
  return auc(p, y);
}

void write_domain_files(const Domain& domain, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/records.csv", std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + dir + "/records.csv");
    f << "student_id,exercise_id,score\n";
    for (const auto& rec : domain.records)
      f << rec.student_id << ',' << rec.exercise_id << ',' << rec.score << '\n';
  }
  {
    std::ofstream f(dir + "/qmatrix.csv", std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + dir + "/qmatrix.csv");
    f << "exercise_id,concept_id\n";
    // Concept-major: the loader indexes concepts by first appearance, so this
    // order makes a reload reproduce the in-memory dense indices exactly.
    for (int k = 0; k < domain.n_concepts(); ++k)
      for (int e = 0; e < domain.n_exercises(); ++e) {
        const auto& row = domain.q[static_cast<std::size_t>(e)];
        if (std::find(row.begin(), row.end(), k) == row.end()) continue;
        f << domain.exercises[static_cast<std::size_t>(e)] << ','
          << domain.concepts[static_cast<std::size_t>(k)] << '\n';
      }
  }
  {
    std::ofstream f(dir + "/names.csv", std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + dir + "/names.csv");
    f << "concept_id,concept_name\n";
    for (int k = 0; k < domain.n_concepts(); ++k)
      f << domain.concepts[static_cast<std::size_t>(k)] << ','
        << domain.concept_names[static_cast<std::size_t>(k)] << '\n';
  }
}

void write_ground_truth(const SynthData& data, const std::string& path) {
  nlohmann::json root;
  root["word_pool_version"] = kWordPoolVersion;
  root["config"] = {
      {"n_domains", data.config.n_domains},
      {"n_students", data.config.n_students},
      {"n_exercises", data.config.n_exercises},
      {"n_concepts", data.config.n_concepts},
      {"responses_per_student", data.config.responses_per_student},
      {"shared_vocab_fraction", data.config.shared_vocab_fraction},
      {"latent_dim", data.config.latent_dim},
      {"guess", data.config.guess},
      {"slip", data.config.slip},
      {"difficulty_shift", data.config.difficulty_shift},
      {"min_concepts_per_exercise", data.config.min_concepts_per_exercise},
      {"max_concepts_per_exercise", data.config.max_concepts_per_exercise},
      {"seed", data.config.seed},
  };
  nlohmann::json domains = nlohmann::json::array();
  for (const auto& sd : data.domains) {
    nlohmann::json jd;
    jd["name"] = sd.domain.name;
    jd["students"] = sd.domain.students;
    jd["exercises"] = sd.domain.exercises;
    jd["concepts"] = sd.domain.concepts;
    jd["concept_names"] = sd.domain.concept_names;
    auto dump_mat = [](const MatD& m) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      return rows;
    };
    jd["theta"] = dump_mat(sd.theta);
    jd["loadings"] = dump_mat(sd.loadings);
    jd["difficulty"] = std::vector<double>(sd.difficulty.data(),
                                           sd.difficulty.data() + sd.difficulty.size());
    jd["discrimination"] = std::vector<double>(
        sd.discrimination.data(), sd.discrimination.data() + sd.discrimination.size());
    domains.push_back(std::move(jd));
  }
  root["domains"] = std::move(domains);

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  f << root.dump(2) << "\n";
}

}  // namespace crosscog
