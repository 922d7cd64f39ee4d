#include "dprm/reasoning_engine.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>

#include "dprm/prompts.h"
#include "dprm/random.h"
#include "dprm/text.h"
#include "dprm/toy_generator.h"

namespace dprm {

void ReasonConfig::validate() const {
  if (num_candidates == 0) throw Error(ErrorCode::kContract, "N must be >= 1");
  if (top_m == 0) throw Error(ErrorCode::kContract, "m must be >= 1");
  if (max_iterations == 0) throw Error(ErrorCode::kContract, "n must be >= 1");
  if (!(draw_temperature > 0.0)) {
    throw Error(ErrorCode::kContract, "draw_temperature must be > 0");
  }
  strengths.validate();
  if (!models.generator || !models.kg_policy || !models.kg_reference ||
      !models.cot_policy || !models.cot_reference) {
    throw Error(ErrorCode::kContract, "reasoning needs all five models");
  }
}

nlohmann::json ReasonConfig::to_json() const {
  nlohmann::ordered_json j;
  j["max_iterations"] = max_iterations;
  j["num_candidates"] = num_candidates;
  j["top_m"] = top_m;
  j["temperature"] = temperature;
  j["answer_temperature"] = answer_temperature;
  j["draw_temperature"] = draw_temperature;
  j["seed"] = seed;
  j["stop_keyword"] = stop_keyword;
  j["retries"] = retries;
  j["beta"] = strengths.beta;
  j["gamma"] = strengths.gamma;
  j["mode"] = mode == EngineMode::kToy ? "toy" : "real";
  return j;
}

nlohmann::json BonRecord::to_json() const {
  nlohmann::ordered_json j;
  j["candidates"] = candidates;
  nlohmann::json r = nlohmann::json::array();
  for (const auto& v : rewards) {
    if (v) {
      r.push_back(*v);
    } else {
      r.push_back(nullptr);
    }
  }
  j["rewards"] = r;
  j["selected"] = selected;
  return j;
}

nlohmann::json IterationRecord::to_json() const {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["query"] = query;
  j["kg"] = kg.to_json();
  j["cot"] = cot.to_json();
  j["warnings"] = warnings;
  return j;
}

nlohmann::json ReasonState::to_json() const {
  nlohmann::ordered_json j;
  j["question"] = question;
  j["kg_path"] = serialize_kg_path(kg_path);
  j["cot"] = cot_lines(cot);
  j["iteration"] = iteration;
  j["finished"] = finished;
  nlohmann::json t = nlohmann::json::array();
  for (const auto& rec : trace) t.push_back(rec.to_json());
  j["trace"] = t;
  return j;
}

nlohmann::json ReasonResult::to_json() const {
  nlohmann::ordered_json j;
  j["answer"] = answer;
  j["state"] = state.to_json();
  return j;
}

EngineError::EngineError(const Error& cause, ReasonState partial)
    : Error(ErrorCode::kEngine, std::string(error_code_name(cause.code())) + ": " +
                                    cause.what()),
      cause_(cause.code()),
      partial_(std::move(partial)) {}

BonResult best_of_n(std::size_t num_candidates,
                    const std::function<double(std::size_t)>& scorer) {
  if (num_candidates == 0) throw Error(ErrorCode::kContract, "best_of_n needs candidates");
  BonResult out;
  out.rewards.resize(num_candidates);
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < num_candidates; ++j) {
    try {
      const double r = scorer(j);
      if (std::isnan(r)) continue;
      out.rewards[j] = r;
      if (!best || r > *out.rewards[*best]) best = j;
    } catch (const Error&) {
    }
  }
  if (!best) throw Error(ErrorCode::kNoViableCandidate, "every candidate failed to score");
  out.winner = *best;
  return out;
}

std::vector<std::string> step_entities(const Graph& graph, const std::string& body) {
  try {
    const KgPath p = cot_to_kg_path(Cot{{body}});
    return {p.steps.front().head, p.steps.front().tail};
  } catch (const Error&) {
    return entities_in_text(graph, body);
  }
}

ReasoningEngine::ReasoningEngine(const Graph& graph, const Embedder& embedder,
                                 ReasonConfig config)
    : graph_(&graph),
      embedder_(&embedder),
      config_(std::move(config)),
      index_(EmbeddingIndex::build(graph, embedder)) {
  config_.validate();
}

std::string ReasoningEngine::step_query(const ReasonState& state) {
  if (state.cot.steps.empty()) return state.question;
  return state.question + " " + cot_lines(state.cot).back();
}

std::uint64_t ReasoningEngine::step_seed(const ReasonState& state,
                                         std::uint64_t salt) const {
  return mix_seed(mix_seed(config_.seed, fnv1a64(state.question)),
                  state.iteration * 16 + salt);
}

std::vector<ScoredIndex> ReasoningEngine::retrieve(
    const std::string& query, const std::string& question,
    std::vector<std::string>& warnings) const {
  const std::vector<std::string> texts{query};
  auto hits = top_m(embedder_->embed(texts).row(0).transpose(), index_, config_.top_m);
  const bool empty = std::none_of(hits.begin(), hits.end(),
                                  [](const ScoredIndex& s) { return s.similarity > 0.0; });
  if (empty && query != question) {
    warnings.push_back("retrieval for the step query found nothing; using the question");
    const std::vector<std::string> q{question};
    hits = top_m(embedder_->embed(q).row(0).transpose(), index_, config_.top_m);
  }
  return hits;
}

std::vector<std::string> ReasoningEngine::generate(const std::string& prompt,
                                                   std::size_t n, double temperature,
                                                   std::uint64_t seed) const {
  auto one = [&](std::size_t j) {
    SampleOptions options;
    options.n = 1;
    options.temperature = temperature;
    options.seed = seed + j;
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        auto out = config_.models.generator->sample(prompt, options);
        if (out.empty()) throw Error(ErrorCode::kEngine, "generator returned nothing");
        return out.front();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kTransport || attempt >= config_.retries) throw;
      }
    }
  };
  std::vector<std::string> out(n);
  if (config_.parallel_candidates && n > 1) {
    std::vector<std::future<std::string>> jobs;
    for (std::size_t j = 0; j < n; ++j) jobs.push_back(std::async(std::launch::async, one, j));
    for (std::size_t j = 0; j < n; ++j) out[j] = jobs[j].get();
  } else {
    for (std::size_t j = 0; j < n; ++j) out[j] = one(j);
  }
  return out;
}

namespace {

// Rewards of every candidate, null where scoring failed.
std::vector<std::optional<double>> score_all(
    std::size_t n, bool parallel, const std::function<double(std::size_t)>& scorer) {
  std::vector<std::optional<double>> rewards(n);
  auto one = [&](std::size_t j) -> std::optional<double> {
    try {
      return scorer(j);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  if (parallel && n > 1) {
    std::vector<std::future<std::optional<double>>> jobs;
    for (std::size_t j = 0; j < n; ++j) jobs.push_back(std::async(std::launch::async, one, j));
    for (std::size_t j = 0; j < n; ++j) rewards[j] = jobs[j].get();
  } else {
    for (std::size_t j = 0; j < n; ++j) rewards[j] = one(j);
  }
  return rewards;
}

BonRecord screen(std::vector<std::string> candidates,
                 const std::vector<std::optional<double>>& rewards) {
  const BonResult bon = best_of_n(candidates.size(), [&](std::size_t j) {
    if (!rewards[j]) throw Error(ErrorCode::kEngine, "unscored");
    return *rewards[j];
  });
  return BonRecord{std::move(candidates), bon.rewards, bon.winner};
}

}  // namespace

BonRecord ReasoningEngine::select_triple(ReasonState& state, const std::string& query,
                                         std::vector<std::string>& warnings) const {
  std::vector<std::string> sources;
  if (state.cot.steps.empty()) {
    sources = entities_in_text(*graph_, state.question);
  } else if (config_.mode == EngineMode::kToy) {
    sources = step_entities(*graph_, state.cot.steps.back());
  } else {
    sources = {state.kg_path.terminal()};
    for (auto& e : entities_in_text(*graph_, state.cot.steps.back())) {
      if (std::find(sources.begin(), sources.end(), e) == sources.end()) {
        sources.push_back(std::move(e));
      }
    }
  }

  const auto hits = retrieve(query, state.question, warnings);
  const std::size_t n = config_.num_candidates;
  std::vector<Triple> raw;
  if (config_.mode == EngineMode::kToy) {
    // Draw from the retrieved set by similarity, without replacement while the
    // set lasts.
    std::mt19937_64 rng(step_seed(state, 1));
    const double top = hits.front().similarity;
    std::vector<double> weight;
    for (const auto& h : hits) {
      weight.push_back(std::exp((h.similarity - top) / config_.draw_temperature));
    }
    std::vector<double> live = weight;
    for (std::size_t j = 0; j < n; ++j) {
      double total = 0.0;
      for (double w : live) total += w;
      if (total <= 0.0) {
        live = weight;
        total = 0.0;
        for (double w : live) total += w;
      }
      double u = unit_uniform(rng) * total;
      std::size_t k = 0;
      while (k + 1 < live.size() && (u >= live[k] || live[k] == 0.0)) {
        u -= live[k];
        ++k;
      }
      raw.push_back(graph_->triples()[hits[k].index]);
      live[k] = 0.0;
    }
  } else {
    std::vector<Triple> listed;
    for (const auto& h : hits) listed.push_back(graph_->triples()[h.index]);
    const std::string previous =
        state.cot.steps.empty() ? state.question : cot_lines(state.cot).back();
    const auto replies = generate(prompts::kg_step(state.question, previous, listed), n,
                                  config_.temperature, step_seed(state, 2));
    for (const auto& reply : replies) {
      if (auto t = parse_triple(trim(reply))) raw.push_back(*t);
    }
    if (raw.empty()) {
      throw Error(ErrorCode::kNoViableCandidate, "no parseable KG candidate");
    }
  }

  std::vector<Triple> candidates;
  for (const auto& t : raw) {
    try {
      candidates.push_back(reconstruct_triple(t, sources));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotReconstructible) throw;
    }
  }
  if (candidates.empty()) {
    warnings.push_back("no candidate triple could be reconstructed; using them as drawn");
    candidates = raw;
  }

  const ProcessRewardModel prm(*config_.models.kg_policy, *config_.models.kg_reference,
                               config_.strengths.gamma);
  auto scorer = [&](std::size_t j) {
    KgPath path = state.kg_path;
    path.steps.push_back(candidates[j]);
    return prm.last_step_reward(state.question, kg_path_steps(path));
  };
  std::vector<std::string> texts;
  for (const auto& t : candidates) texts.push_back(render_triple(t));
  BonRecord rec = screen(std::move(texts),
                         score_all(candidates.size(), config_.parallel_candidates, scorer));
  state.kg_path.steps.push_back(candidates[rec.selected]);
  return rec;
}

BonRecord ReasoningEngine::select_step(ReasonState& state,
                                       std::vector<std::string>& warnings) const {
  (void)warnings;
  const std::string prompt =
      prompts::cot_step(state.question, state.kg_path.steps.back(), state.cot);
  auto samples = generate(prompt, config_.num_candidates, config_.temperature,
                          step_seed(state, 3));
  for (auto& s : samples) {
    const auto newline = s.find('\n');
    s = trim(newline == std::string::npos ? s : s.substr(0, newline));
  }
  const ProcessRewardModel prm(*config_.models.cot_policy, *config_.models.cot_reference,
                               config_.strengths.beta);
  auto scorer = [&](std::size_t j) {
    if (samples[j].empty()) throw Error(ErrorCode::kExtraction, "empty step");
    Cot cot = state.cot;
    cot.steps.push_back(samples[j]);
    return prm.last_step_reward(state.question, cot_lines(cot));
  };
  auto rewards = score_all(samples.size(), config_.parallel_candidates, scorer);
  BonRecord rec = screen(samples, rewards);
  state.cot.steps.push_back(samples[rec.selected]);
  if (contains_case_insensitive(samples[rec.selected], config_.stop_keyword) ||
      state.iteration >= config_.max_iterations) {
    state.finished = true;
  }
  return rec;
}

ReasonState ReasoningEngine::initialize(const std::string& question) const {
  ReasonState state;
  state.question = question;
  state.iteration = 1;
  state.trace.emplace_back();
  IterationRecord& rec = state.trace.back();
  rec.iteration = 1;
  rec.query = question;
  try {
    rec.kg = select_triple(state, question, rec.warnings);
    rec.cot = select_step(state, rec.warnings);
  } catch (const EngineError&) {
    throw;
  } catch (const Error& e) {
    throw EngineError(e, state);
  }
  return state;
}

void ReasoningEngine::kg_step(ReasonState& state) const {
  if (state.finished) throw Error(ErrorCode::kContract, "reasoning already finished");
  if (state.kg_path.size() != state.cot.steps.size()) {
    throw Error(ErrorCode::kContract, "kg_step must follow cot_step");
  }
  IterationRecord rec;
  rec.query = step_query(state);
  ++state.iteration;
  rec.iteration = state.iteration;
  state.trace.push_back(std::move(rec));
  IterationRecord& live = state.trace.back();
  try {
    live.kg = select_triple(state, live.query, live.warnings);
  } catch (const Error& e) {
    throw EngineError(e, state);
  }
}

void ReasoningEngine::cot_step(ReasonState& state) const {
  if (state.finished) throw Error(ErrorCode::kContract, "reasoning already finished");
  if (state.kg_path.size() != state.cot.steps.size() + 1) {
    throw Error(ErrorCode::kContract, "cot_step must follow kg_step");
  }
  IterationRecord& live = state.trace.back();
  try {
    live.cot = select_step(state, live.warnings);
  } catch (const Error& e) {
    throw EngineError(e, state);
  }
}

ReasonResult ReasoningEngine::run(const std::string& question) const {
  ReasonResult result;
  result.state = initialize(question);
  while (!result.state.finished) {
    kg_step(result.state);
    cot_step(result.state);
  }
  result.answer_prompt =
      prompts::final_answer(question, result.state.cot, result.state.kg_path);
  try {
    result.answer = trim(generate(result.answer_prompt, 1, config_.answer_temperature,
                                  step_seed(result.state, 4))
                             .front());
  } catch (const Error& e) {
    throw EngineError(e, result.state);
  }
  return result;
}

}  // namespace dprm
