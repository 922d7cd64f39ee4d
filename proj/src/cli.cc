#include "dprm/cli.h"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "dprm/error.h"
#include "dprm/eval_harness.h"
#include "dprm/proposition_check.h"
#include "dprm/remote_lm.h"
#include "dprm/retrieval.h"
#include "dprm/text.h"

namespace dprm::cli {

namespace {

std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  try {
    if (!v.empty() && v[0] != '-') {
      const auto x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw UsageError("bad value for " + key + ": '" + v + "' (expected an unsigned integer)");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  try {
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw UsageError("bad value for " + key + ": '" + v + "' (expected a number)");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("bad value for " + key + ": '" + v + "' (expected true or false)");
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return in;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

nlohmann::ordered_json world_json(const ToyWorldOptions& w) {
  nlohmann::ordered_json j;
  j["entities"] = w.graph.num_entities;
  j["relations"] = w.graph.num_relations;
  j["types"] = w.graph.num_types;
  j["graph_seed"] = w.graph.seed;
  j["train_questions"] = w.train_questions;
  j["eval_questions"] = w.eval_questions;
  j["order"] = w.order;
  j["max_len"] = w.max_len;
  j["distractors"] = w.distractor_pool;
  j["rejections_per_path"] = w.rejections_per_path;
  j["seed"] = w.seed;
  return j;
}

ToyWorldOptions world_from_json(const nlohmann::json& j) {
  ToyWorldOptions w;
  w.graph.num_entities = j.at("entities").get<std::size_t>();
  w.graph.num_relations = j.at("relations").get<std::size_t>();
  w.graph.num_types = j.at("types").get<std::size_t>();
  w.graph.seed = j.at("graph_seed").get<std::uint64_t>();
  w.train_questions = j.at("train_questions").get<std::size_t>();
  w.eval_questions = j.at("eval_questions").get<std::size_t>();
  w.order = j.at("order").get<std::size_t>();
  w.max_len = j.at("max_len").get<std::size_t>();
  w.distractor_pool = j.at("distractors").get<std::size_t>();
  w.rejections_per_path = j.at("rejections_per_path").get<std::size_t>();
  w.seed = j.at("seed").get<std::uint64_t>();
  return w;
}

// Parsed command-line flags; `given` tells whether a flag was passed.
struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string graph;
  std::string dataset;
  std::string pairs;
  std::string pairs_out = "pairs.jsonl";
  std::string model = "model.bin";
  std::string model_out = "model.bin";
  std::string out;
  std::string gateway_url;
  std::string variant = "full";
  std::string question;
  std::string mode = "toy";
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t iterations = 0;
  std::size_t instances = 50;
  std::size_t threads = 0;
  double strength = 0.0;
  std::multimap<std::string, CLI::Option*> options;

  bool given(const std::string& name) const {
    const auto [b, e] = options.equal_range(name);
    for (auto it = b; it != e; ++it) {
      if (it->second->count() > 0) return true;
    }
    return false;
  }
};

struct Run {
  std::string command;
  Flags flags;
  Settings settings;
  std::string started;
  std::ostream* out;
  std::ostream* err;
};

Settings resolve_settings(const Flags& f) {
  Settings s;
  if (!f.config.empty()) {
    for (const auto& [k, v] : read_config_file(f.config)) s.set(k, v);
  }
  if (f.given("--seed")) s.set("seed", std::to_string(f.seed));
  if (f.given("--n")) s.reason.num_candidates = f.n;
  if (f.given("--m")) s.reason.top_m = f.m;
  if (f.given("--iterations")) s.reason.max_iterations = f.iterations;
  if (f.given("--threads")) s.parallelism = f.threads;
  if (f.given("--gateway-url")) s.gateway_url = f.gateway_url;
  if (f.given("--strength")) {
    if (!(f.strength > 0.0)) throw UsageError("--strength must be positive");
    s.train.strength = f.strength;
    s.reason.strengths.beta = f.strength;
    s.reason.strengths.gamma = f.strength;
  }
  return s;
}

void write_manifest(const Run& run, const std::string& primary,
                    const std::vector<std::string>& outputs) {
  nlohmann::ordered_json j;
  j["command"] = run.command;
  j["config_file"] = run.flags.config.empty() ? nlohmann::ordered_json(nullptr)
                                              : nlohmann::ordered_json(run.flags.config);
  j["resolved_config"] = run.settings.to_json();
  j["seed"] = run.settings.seed;
  j["outputs"] = outputs;
  j["started_at"] = run.started;
  j["finished_at"] = timestamp_now();
  write_text(primary + ".manifest.json", j.dump(2) + "\n");
}

Graph load_graph_or_planted(const std::string& path, const ToyWorldOptions& world) {
  if (!path.empty()) return load_triples_file(path);
  return planted_graph(world.graph);
}

std::vector<QaExample> load_qa(const std::string& path) {
  auto in = open_in(path);
  return read_qa_jsonl(in);
}

std::unique_ptr<Embedder> make_embedder(const Settings& s, const Graph& graph) {
  if (s.embed_idf) {
    const auto corpus = graph_renderings(graph);
    return std::make_unique<HashingEmbedder>(HashingEmbedder::fit(corpus, s.embed_dim));
  }
  return std::make_unique<HashingEmbedder>(s.embed_dim);
}

int cmd_gen_pairs(Run& run) {
  const Settings& s = run.settings;
  const Graph graph = load_graph_or_planted(run.flags.graph, s.world);
  const auto train_qa = run.flags.dataset.empty() ? planted_split(graph, s.world).train
                                                  : load_qa(run.flags.dataset);
  const auto pairs = build_pairs(graph, train_qa, s.world);
  {
    auto out = open_out(run.flags.pairs_out);
    write_pairs_jsonl(out, pairs.kg);
    write_pairs_jsonl(out, pairs.cot);
  }
  write_manifest(run, run.flags.pairs_out, {run.flags.pairs_out});
  *run.out << "wrote " << pairs.kg.size() << " kg and " << pairs.cot.size()
           << " cot pairs to " << run.flags.pairs_out << "\n";
  return 0;
}

int cmd_train(Run& run) {
  const Settings& s = run.settings;
  const Graph graph = load_graph_or_planted(run.flags.graph, s.world);
  std::vector<PreferencePair> kg, cot;
  if (!run.flags.pairs.empty()) {
    auto in = open_in(run.flags.pairs);
    for (auto& p : read_pairs_jsonl(in)) {
      if (p.origin != Origin::kNative) continue;
      (p.modality == Modality::kKg ? kg : cot).push_back(std::move(p));
    }
  } else {
    const auto train_qa = run.flags.dataset.empty() ? planted_split(graph, s.world).train
                                                    : load_qa(run.flags.dataset);
    auto pairs = build_pairs(graph, train_qa, s.world);
    kg = std::move(pairs.kg);
    cot = std::move(pairs.cot);
  }
  if (kg.empty() || cot.empty()) {
    throw Error(ErrorCode::kContract, "training needs both kg and cot pairs");
  }
  ToyWorld world{graph, {}, {}, {}, std::move(kg), std::move(cot),
                 ToyLm(toy_vocabulary(graph), s.world.order, s.world.max_len)};
  const auto models = train_toy_models(world, s.train);

  nlohmann::ordered_json meta;
  meta["world"] = world_json(s.world);
  meta["graph"] = run.flags.graph.empty() ? "planted" : run.flags.graph;
  meta["train"] = s.train.to_json();
  const std::string& path = run.flags.model_out;
  {
    auto out = open_out(path, true);
    save_toy_models(out, *models, meta);
    if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
  }
  nlohmann::ordered_json report;
  auto side = [](const TrainResult& r) { return r.report.to_json(); };
  report["full"] = {{"kg", side(models->full.kg)}, {"cot", side(models->full.cot)}};
  report["init_only"] = {{"kg", side(models->init_only.kg)},
                         {"cot", side(models->init_only.cot)}};
  const std::string report_path = path + ".report.json";
  write_text(report_path, report.dump(2) + "\n");
  write_manifest(run, path, {path, report_path});
  *run.out << "held-out margin accuracy: kg " << models->full.kg.report.margin_accuracy
           << ", cot " << models->full.cot.report.margin_accuracy << "\n";
  return 0;
}

// Models, graph and embedder shared by `reason` and `eval`.
struct Loaded {
  Graph graph;
  ToyWorldOptions world;
  std::unique_ptr<ToyModels> toy;
  std::unique_ptr<GatewayClient> client;
  std::vector<std::unique_ptr<RemoteLm>> remote;
  std::unique_ptr<Embedder> embedder;
  ReasonModels full;
  ReasonModels init_only;
  bool real = false;
};

std::string gateway_url_or_usage(const std::string& url, const std::string& who) {
  try {
    return resolve_gateway_url(url);
  } catch (const Error&) {
    throw UsageError(who + " needs --gateway-url or DPRM_GATEWAY_URL");
  }
}

Loaded load_for_reasoning(const Run& run) {
  const Settings& s = run.settings;
  Loaded l;
  l.world = s.world;
  if (run.flags.mode == "real") {
    l.real = true;
    const std::string url = gateway_url_or_usage(s.gateway_url, "real mode");
    l.graph = load_graph_or_planted(run.flags.graph, l.world);
    l.client = std::make_unique<GatewayClient>(GatewayOptions{url, s.gateway_timeout});
    for (const auto* name : {&s.generator_model, &s.kg_policy_model, &s.kg_reference_model,
                             &s.cot_policy_model, &s.cot_reference_model}) {
      l.remote.push_back(std::make_unique<RemoteLm>(*l.client, *name));
    }
    l.full = {l.remote[0].get(), l.remote[1].get(), l.remote[2].get(), l.remote[3].get(),
              l.remote[4].get()};
    l.init_only = l.full;
    l.embedder = std::make_unique<RemoteEmbedder>(*l.client);
    return l;
  }
  if (run.flags.mode != "toy") throw UsageError("--mode must be toy or real");
  auto in = open_in(run.flags.model, true);
  std::string header_line;
  {
    // The header names the graph the models were trained on.
    const auto pos = in.tellg();
    std::getline(in, header_line);
    in.seekg(pos);
  }
  nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
  if (header.is_discarded() || !header.contains("meta")) {
    throw Error(ErrorCode::kParse, "not a model bundle: " + run.flags.model);
  }
  const auto& meta = header.at("meta");
  l.world = world_from_json(meta.at("world"));
  std::string graph_path = run.flags.graph;
  if (graph_path.empty() && meta.at("graph") != "planted") {
    graph_path = meta.at("graph").get<std::string>();
  }
  l.graph = load_graph_or_planted(graph_path, l.world);
  auto loaded = load_toy_models(in, l.graph);
  l.toy = std::move(loaded.models);
  l.full = l.toy->full_models();
  l.init_only = l.toy->init_models();
  l.embedder = make_embedder(s, l.graph);
  return l;
}

ReasonConfig reason_config(const Settings& s, const Loaded& l) {
  ReasonConfig c = s.reason;
  c.seed = s.seed;
  c.mode = l.real ? EngineMode::kReal : EngineMode::kToy;
  c.models = l.full;
  return c;
}

int cmd_reason(Run& run) {
  if (run.flags.question.empty()) throw UsageError("reason needs --question");
  const Loaded l = load_for_reasoning(run);
  const ReasonConfig config = reason_config(run.settings, l);
  const ReasoningEngine engine(l.graph, *l.embedder, config);
  const std::string path = run.flags.out.empty() ? "reason.json" : run.flags.out;
  nlohmann::ordered_json j;
  int code = 0;
  try {
    const auto result = engine.run(run.flags.question);
    j["answer"] = result.answer;
    j["result"] = result.to_json();
    *run.out << result.answer << "\n";
  } catch (const EngineError& e) {
    j["error"] = e.what();
    j["partial"] = e.partial().to_json();
    *run.err << "error: " << e.what() << "\n";
    code = 1;
  }
  j["config"] = config.to_json();
  write_text(path, j.dump(2) + "\n");
  write_manifest(run, path, {path});
  return code;
}

int cmd_eval(Run& run) {
  const Variant variant = [&] {
    try {
      return parse_variant(run.flags.variant);
    } catch (const Error&) {
      throw UsageError("unknown --variant '" + run.flags.variant + "'");
    }
  }();
  const Loaded l = load_for_reasoning(run);
  if (l.real && (variant == Variant::kNoCotrain || variant == Variant::kNoBoth)) {
    throw UsageError("real mode serves one PRM pair; use --variant full or no_iteration");
  }
  std::vector<QaExample> dataset;
  if (!run.flags.dataset.empty()) {
    dataset = load_qa(run.flags.dataset);
  } else {
    dataset = planted_split(l.graph, l.world).eval;
  }
  const ReasonConfig config = reason_config(run.settings, l);
  EvalSetup setup{l.full, l.init_only, run.settings.parallelism};
  const auto report = run_eval(dataset, l.graph, *l.embedder, config, setup, variant);
  const std::string path = run.flags.out.empty() ? "eval_report.json" : run.flags.out;
  const std::string traces = path + ".traces";
  write_text(path, report.to_json().dump(2) + "\n");
  write_traces(report, traces);
  write_manifest(run, path, {path, traces});
  *run.out << to_string(variant) << " hit@1 " << report.hit_at_1 << " f1 " << report.f1
           << " over " << report.rows.size() << " questions\n";
  return 0;
}

int cmd_verify_prop1(Run& run) {
  if (run.flags.instances == 0) throw UsageError("--instances must be >= 1");
  const double strength = run.flags.given("--strength") ? run.flags.strength : 0.05;
  const auto check = check_proposition(run.flags.instances, run.settings.seed, strength);
  nlohmann::json j = check.to_json();
  j["tolerance"] = 1e-9;
  j["pass"] = check.max_relative_error < 1e-9;
  *run.out << j.dump(2) << "\n";
  if (!run.flags.out.empty()) {
    write_text(run.flags.out, j.dump(2) + "\n");
    write_manifest(run, run.flags.out, {run.flags.out});
  }
  return check.max_relative_error < 1e-9 ? 0 : 1;
}

int cmd_serve_check(Run& run) {
  const std::string url = gateway_url_or_usage(run.settings.gateway_url, "serve-check");
  GatewayClient client(GatewayOptions{url, run.settings.gateway_timeout});
  const auto report = probe_gateway(client, run.settings.generator_model);
  *run.out << report.to_json().dump(2) << "\n";
  if (!run.flags.out.empty()) {
    write_text(run.flags.out, report.to_json().dump(2) + "\n");
    write_manifest(run, run.flags.out, {run.flags.out});
  }
  return report.ok() ? 0 : 1;
}

}  // namespace

Settings::Settings() {
  world.seed = seed;
  train.seed = seed;
  reason.seed = seed;
}

void Settings::set(const std::string& key, const std::string& v) {
  if (key == "seed") {
    seed = parse_u64(key, v);
    world.seed = seed;
    train.seed = seed;
    reason.seed = seed;
  } else if (key == "world.entities") {
    world.graph.num_entities = parse_size(key, v);
  } else if (key == "world.relations") {
    world.graph.num_relations = parse_size(key, v);
  } else if (key == "world.types") {
    world.graph.num_types = parse_size(key, v);
  } else if (key == "world.graph_seed") {
    world.graph.seed = parse_u64(key, v);
  } else if (key == "world.train_questions") {
    world.train_questions = parse_size(key, v);
  } else if (key == "world.eval_questions") {
    world.eval_questions = parse_size(key, v);
  } else if (key == "world.order") {
    world.order = parse_size(key, v);
  } else if (key == "world.max_len") {
    world.max_len = parse_size(key, v);
  } else if (key == "world.distractors") {
    world.distractor_pool = parse_size(key, v);
  } else if (key == "world.rejections_per_path") {
    world.rejections_per_path = parse_size(key, v);
  } else if (key == "train.strength") {
    train.strength = parse_double(key, v);
  } else if (key == "train.learning_rate") {
    train.learning_rate = parse_double(key, v);
  } else if (key == "train.epochs") {
    train.epochs = parse_size(key, v);
  } else if (key == "train.batch_size") {
    train.batch_size = parse_size(key, v);
  } else if (key == "reason.n") {
    reason.num_candidates = parse_size(key, v);
  } else if (key == "reason.m") {
    reason.top_m = parse_size(key, v);
  } else if (key == "reason.iterations") {
    reason.max_iterations = parse_size(key, v);
  } else if (key == "reason.temperature") {
    reason.temperature = parse_double(key, v);
  } else if (key == "reason.answer_temperature") {
    reason.answer_temperature = parse_double(key, v);
  } else if (key == "reason.draw_temperature") {
    reason.draw_temperature = parse_double(key, v);
  } else if (key == "reason.beta") {
    reason.strengths.beta = parse_double(key, v);
  } else if (key == "reason.gamma") {
    reason.strengths.gamma = parse_double(key, v);
  } else if (key == "reason.stop_keyword") {
    reason.stop_keyword = v;
  } else if (key == "reason.retries") {
    reason.retries = parse_size(key, v);
  } else if (key == "reason.parallel_candidates") {
    reason.parallel_candidates = parse_bool(key, v);
  } else if (key == "eval.parallelism") {
    parallelism = parse_size(key, v);
  } else if (key == "embed.dim") {
    embed_dim = parse_size(key, v);
    if (embed_dim == 0) throw UsageError("embed.dim must be >= 1");
  } else if (key == "embed.idf") {
    embed_idf = parse_bool(key, v);
  } else if (key == "gateway.url") {
    gateway_url = v;
  } else if (key == "gateway.timeout") {
    gateway_timeout = parse_double(key, v);
  } else if (key == "gateway.generator") {
    generator_model = v;
  } else if (key == "gateway.kg_policy") {
    kg_policy_model = v;
  } else if (key == "gateway.kg_reference") {
    kg_reference_model = v;
  } else if (key == "gateway.cot_policy") {
    cot_policy_model = v;
  } else if (key == "gateway.cot_reference") {
    cot_reference_model = v;
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

nlohmann::ordered_json Settings::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["world"] = world_json(world);
  nlohmann::ordered_json t;
  t["strength"] = train.strength;
  t["learning_rate"] = train.learning_rate;
  t["epochs"] = train.epochs;
  t["batch_size"] = train.batch_size;
  j["train"] = t;
  nlohmann::ordered_json r;
  r["n"] = reason.num_candidates;
  r["m"] = reason.top_m;
  r["iterations"] = reason.max_iterations;
  r["temperature"] = reason.temperature;
  r["answer_temperature"] = reason.answer_temperature;
  r["draw_temperature"] = reason.draw_temperature;
  r["beta"] = reason.strengths.beta;
  r["gamma"] = reason.strengths.gamma;
  r["stop_keyword"] = reason.stop_keyword;
  r["retries"] = reason.retries;
  r["parallel_candidates"] = reason.parallel_candidates;
  j["reason"] = r;
  j["eval"] = {{"parallelism", parallelism}};
  j["embed"] = {{"dim", embed_dim}, {"idf", embed_idf}};
  nlohmann::ordered_json g;
  g["url"] = gateway_url;
  g["timeout"] = gateway_timeout;
  g["generator"] = generator_model;
  g["kg_policy"] = kg_policy_model;
  g["kg_reference"] = kg_reference_model;
  g["cot_policy"] = cot_policy_model;
  g["cot_reference"] = cot_reference_model;
  j["gateway"] = g;
  return j;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim_copy(line.substr(0, eq));
    if (key.empty()) throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    out[key] = trim_copy(line.substr(eq + 1));
  }
  return out;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual implicit process reward models for multi-hop KG question answering"};
  app.name("dprm");
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    f.options.emplace("--config", sub->add_option("--config", f.config, "key = value config file"));
    f.options.emplace("--seed", sub->add_option("--seed", f.seed, "run seed"));
    f.options.emplace("--strength", sub->add_option("--strength", f.strength, "reward strength for both PRMs"));
  };
  auto graph_flags = [&](CLI::App* sub) {
    f.options.emplace("--graph", sub->add_option("--graph", f.graph, "triples file (.tsv or .jsonl)"));
    f.options.emplace("--dataset", sub->add_option("--dataset", f.dataset, "QA JSONL file"));
  };
  auto reason_flags = [&](CLI::App* sub) {
    sub->add_option("--model", f.model, "model bundle written by train");
    f.options.emplace("--n", sub->add_option("--n", f.n, "candidates per Best-of-N step"));
    f.options.emplace("--m", sub->add_option("--m", f.m, "retrieved triples per step"));
    f.options.emplace("--iterations", sub->add_option("--iterations", f.iterations, "maximum reasoning iterations"));
    f.options.emplace("--gateway-url", sub->add_option("--gateway-url", f.gateway_url, "model gateway URL (real mode)"));
    sub->add_option("--mode", f.mode, "toy or real")->check(CLI::IsMember({"toy", "real"}));
    sub->add_option("--out", f.out, "output JSON path");
  };

  auto* gen = app.add_subcommand("gen-pairs", "generate preference pairs as JSONL");
  common(gen);
  graph_flags(gen);
  gen->add_option("--pairs-out", f.pairs_out, "output JSONL path");

  auto* train = app.add_subcommand("train", "train the KG and CoT PRMs");
  common(train);
  graph_flags(train);
  train->add_option("--pairs", f.pairs, "pairs JSONL from gen-pairs");
  train->add_option("--model-out", f.model_out, "output model bundle path");

  auto* reason = app.add_subcommand("reason", "answer one question");
  common(reason);
  graph_flags(reason);
  reason_flags(reason);
  reason->add_option("--question", f.question, "question text");

  auto* eval = app.add_subcommand("eval", "evaluate a dataset");
  common(eval);
  graph_flags(eval);
  reason_flags(eval);
  eval->add_option("--variant", f.variant, "full, no_cotrain, no_iteration or no_both");
  f.options.emplace("--threads", eval->add_option("--threads", f.threads, "questions in flight"));

  auto* prop = app.add_subcommand("verify-prop1", "check cumulative q against enumeration");
  common(prop);
  prop->add_option("--instances", f.instances, "random instances");
  prop->add_option("--out", f.out, "report JSON path");

  auto* serve = app.add_subcommand("serve-check", "probe a model gateway");
  common(serve);
  f.options.emplace("--gateway-url", serve->add_option("--gateway-url", f.gateway_url, "gateway URL"));
  serve->add_option("--out", f.out, "report JSON path");

  if (argc <= 1) {
    err << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      for (auto* sub : app.get_subcommands()) out << sub->help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  run.started = timestamp_now();
  run.out = &out;
  run.err = &err;
  try {
    run.settings = resolve_settings(f);
    run.flags = f;
    if (run.command == "gen-pairs") return cmd_gen_pairs(run);
    if (run.command == "train") return cmd_train(run);
    if (run.command == "reason") return cmd_reason(run);
    if (run.command == "eval") return cmd_eval(run);
    if (run.command == "verify-prop1") return cmd_verify_prop1(run);
    return cmd_serve_check(run);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dprm::cli
