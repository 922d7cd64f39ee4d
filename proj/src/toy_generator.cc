#include "dprm/toy_generator.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <regex>

#include "dprm/error.h"
#include "dprm/preference_foundry.h"
#include "dprm/prompts.h"
#include "dprm/random.h"
#include "dprm/text.h"

namespace dprm {

namespace {

bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '~';
}

// Start offsets of whole-word occurrences of `word` in `text`.
std::vector<std::size_t> word_hits(const std::string& text, const std::string& word) {
  std::vector<std::size_t> hits;
  if (word.empty()) return hits;
  for (std::size_t pos = text.find(word); pos != std::string::npos;
       pos = text.find(word, pos + 1)) {
    const bool left = pos == 0 || !word_char(text[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right = end >= text.size() || !word_char(text[end]);
    if (left && right) hits.push_back(pos);
  }
  return hits;
}

std::vector<std::string> ordered_matches(const std::vector<std::string>& names,
                                         const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> found;
  for (const auto& name : names) {
    const auto hits = word_hits(text, name);
    if (!hits.empty()) found.emplace_back(hits.front(), name);
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (auto& [pos, name] : found) out.push_back(std::move(name));
  return out;
}

}  // namespace

std::vector<std::string> relations_in_text(const Graph& graph, const std::string& text) {
  return ordered_matches(graph.relations(), text);
}

std::vector<std::string> entities_in_text(const Graph& graph, const std::string& text) {
  return ordered_matches(graph.entities(), text);
}

std::string extract_answer_clause(const std::string& text) {
  static const std::regex re(R"([Aa]nswer is\s+([^.\n]+?)\s*(?:\.|\n|$))");
  std::string last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
       it != std::sregex_iterator(); ++it) {
    last = trim((*it)[1].str());
  }
  return last;
}

ToyGenerator::ToyGenerator(const Graph& graph, ToyGeneratorOptions options)
    : graph_(&graph), options_(options) {
  if (graph.empty()) throw Error(ErrorCode::kEmptyGraph, "toy generator needs a graph");
}

std::vector<TokenScore> ToyGenerator::score(std::string_view, std::string_view) const {
  throw Error(ErrorCode::kUnsupported, "the toy generator cannot score text");
}

std::vector<std::string> ToyGenerator::sample(std::string_view prompt_view,
                                              const SampleOptions& options) const {
  const std::string prompt(prompt_view);
  std::vector<std::string> out;
  for (std::size_t j = 0; j < options.n; ++j) {
    const std::uint64_t seed = mix_seed(options.seed, j);
    std::string text;
    if (!prompts::section_value(prompt, prompts::kKnowledge).empty()) {
      text = cot_step(prompt, options.temperature, seed);
    } else if (prompt.find(prompts::kCandidates) != std::string::npos) {
      text = kg_step(prompt, seed);
    } else if (prompt.find(prompts::kEvidence) != std::string::npos) {
      text = final_answer(prompt);
    } else {
      throw Error(ErrorCode::kUnsupported, "toy generator does not know this prompt");
    }
    out.push_back(truncate_at_stop(text, options.stop));
  }
  return out;
}

std::string ToyGenerator::cot_step(const std::string& prompt, double temperature,
                                   std::uint64_t seed) const {
  const std::string knowledge = prompts::section_value(prompt, prompts::kKnowledge);
  const KgPath parsed = cot_to_kg_path(Cot{{knowledge}});
  Triple t = parsed.steps.front();

  const auto& entities = graph_->entities();
  if (temperature > 1e-8) {
    // Softmax over entities: fidelity / T for the true tail, 0 elsewhere.
    const double boost = std::exp(options_.fidelity / temperature);
    const double mass = boost + static_cast<double>(entities.size() - 1);
    std::mt19937_64 rng(seed);
    const double u = unit_uniform(rng) * mass;
    if (u >= boost) {
      std::size_t k = std::min(static_cast<std::size_t>(u - boost), entities.size() - 2);
      auto it = std::find(entities.begin(), entities.end(), t.tail);
      if (it != entities.end() && k >= static_cast<std::size_t>(it - entities.begin())) ++k;
      t.tail = entities[k];
    }
  }
  std::string body = triple_sentence(t);
  const auto question_relations =
      relations_in_text(*graph_, prompts::section_value(prompt, prompts::kQuestion));
  if (!t.inverted && !question_relations.empty() &&
      question_relations.back() == t.relation) {
    body += " The answer is " + t.tail + ".";
  }
  return body;
}

std::string ToyGenerator::kg_step(const std::string& prompt, std::uint64_t seed) const {
  std::vector<Triple> candidates;
  for (const auto& line : prompts::section_lines(prompt, prompts::kCandidates)) {
    if (auto t = parse_triple(line)) candidates.push_back(*t);
  }
  if (candidates.empty()) throw Error(ErrorCode::kExtraction, "no candidate triples");
  std::mt19937_64 rng(seed);
  Triple pick = candidates[uniform_index(rng, candidates.size())];
  std::string previous;
  for (const auto& line : prompts::section_lines(prompt, prompts::kPrevious)) {
    previous += line + " ";
  }
  const auto sources = entities_in_text(*graph_, previous);
  try {
    pick = reconstruct_triple(pick, sources);
  } catch (const Error&) {
  }
  return render_triple(pick);
}

std::string ToyGenerator::final_answer(const std::string& prompt) const {
  const auto reasoning = prompts::section_lines(prompt, prompts::kReasoning);
  std::string answer = extract_answer_clause(join(reasoning, "\n"));
  if (!answer.empty()) return answer;
  const auto evidence = prompts::section_lines(prompt, prompts::kEvidence);
  if (!evidence.empty()) {
    try {
      return cot_to_kg_path(Cot{{evidence.back()}}).terminal();
    } catch (const Error&) {
    }
  }
  return "";
}

}  // namespace dprm
