#include "dprm/preference_foundry.h"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "dprm/error.h"
#include "dprm/random.h"
#include "dprm/text.h"

namespace dprm {

const char* to_string(Modality m) { return m == Modality::kKg ? "kg" : "cot"; }

const char* to_string(Corruption c) {
  switch (c) {
    case Corruption::kFactual: return "factual";
    case Corruption::kLogical: return "logical";
    case Corruption::kBreak: return "break";
    case Corruption::kSkip: return "skip";
    case Corruption::kRedundant: return "redundant";
  }
  return "factual";
}

const char* to_string(Origin o) {
  return o == Origin::kNative ? "native" : "converted";
}

Modality parse_modality(const std::string& s) {
  if (s == "kg") return Modality::kKg;
  if (s == "cot") return Modality::kCot;
  throw Error(ErrorCode::kParse, "unknown modality '" + s + "'");
}

Corruption parse_corruption(const std::string& s) {
  for (auto c : {Corruption::kFactual, Corruption::kLogical, Corruption::kBreak,
                 Corruption::kSkip, Corruption::kRedundant}) {
    if (s == to_string(c)) return c;
  }
  throw Error(ErrorCode::kParse, "unknown corruption '" + s + "'");
}

Origin parse_origin(const std::string& s) {
  if (s == "native") return Origin::kNative;
  if (s == "converted") return Origin::kConverted;
  throw Error(ErrorCode::kParse, "unknown origin '" + s + "'");
}

std::vector<std::string> cot_lines(const Cot& cot) {
  std::vector<std::string> out;
  out.reserve(cot.steps.size());
  for (std::size_t i = 0; i < cot.steps.size(); ++i) {
    out.push_back("Step " + std::to_string(i + 1) + ": " + cot.steps[i]);
  }
  return out;
}

std::string serialize_cot(const Cot& cot) { return join(cot_lines(cot), "\n"); }

Cot parse_cot(const std::string& text) {
  static const std::regex kPrefix(R"(^\s*Step\s+\d+\s*:\s*)");
  Cot cot;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    line = std::regex_replace(line, kPrefix, "", std::regex_constants::format_first_only);
    line = trim(line);
    if (!line.empty()) cot.steps.push_back(line);
  }
  return cot;
}

bool corruption_valid_for(Modality modality, Corruption corruption) {
  switch (corruption) {
    case Corruption::kFactual: return true;
    case Corruption::kLogical:
    case Corruption::kBreak: return modality == Modality::kKg;
    case Corruption::kSkip:
    case Corruption::kRedundant: return modality == Modality::kCot;
  }
  return false;
}

void PreferencePair::validate() const {
  if (chosen == rejected) {
    throw Error(ErrorCode::kContract, "pair " + id + ": chosen equals rejected");
  }
  if (!corruption_valid_for(modality, corruption)) {
    throw Error(ErrorCode::kContract, std::string("pair ") + id + ": corruption " +
                                          to_string(corruption) +
                                          " invalid for modality " +
                                          to_string(modality));
  }
}

void write_pairs_jsonl(std::ostream& out, std::span<const PreferencePair> pairs) {
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["question"] = p.question;
    j["chosen"] = p.chosen;
    j["rejected"] = p.rejected;
    j["modality"] = to_string(p.modality);
    j["corruption"] = to_string(p.corruption);
    j["origin"] = to_string(p.origin);
    out << j.dump() << '\n';
  }
}

std::vector<PreferencePair> read_pairs_jsonl(std::istream& in) {
  std::vector<PreferencePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PreferencePair p;
      p.id = j.at("id").get<std::string>();
      p.question = j.at("question").get<std::string>();
      p.chosen = j.at("chosen").get<std::string>();
      p.rejected = j.at("rejected").get<std::string>();
      p.modality = parse_modality(j.at("modality").get<std::string>());
      p.corruption = parse_corruption(j.at("corruption").get<std::string>());
      p.origin = parse_origin(j.value("origin", std::string("native")));
      p.validate();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

void write_qa_jsonl(std::ostream& out, std::span<const QaExample> qa) {
  for (const auto& q : qa) {
    nlohmann::ordered_json j;
    j["id"] = q.id;
    j["question"] = q.question;
    j["question_entities"] = q.question_entities;
    j["answers"] = q.answers;
    out << j.dump() << '\n';
  }
}

std::vector<QaExample> read_qa_jsonl(std::istream& in) {
  std::vector<QaExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      QaExample q;
      q.id = j.at("id").get<std::string>();
      q.question = j.at("question").get<std::string>();
      q.question_entities = j.at("question_entities").get<std::vector<std::string>>();
      q.answers = j.at("answers").get<std::vector<std::string>>();
      if (q.question_entities.empty() || q.answers.empty()) {
        throw ParseError(lineno, "need at least one question entity and answer");
      }
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

namespace {

// Edges leaving `entity` in traversal order: outgoing edges, plus incoming
// edges as inverted triples when requested, merged by load index.
std::vector<std::pair<std::size_t, Triple>> walk_edges(const Graph& graph,
                                                       const std::string& entity,
                                                       bool traverse_inverse) {
  std::vector<std::pair<std::size_t, Triple>> out;
  for (auto i : graph.by_head(entity)) out.emplace_back(i, graph.triples()[i]);
  if (traverse_inverse) {
    for (auto i : graph.by_tail(entity)) {
      const auto& t = graph.triples()[i];
      if (t.head == t.tail) continue;  // self-loop already listed
      out.emplace_back(i, Triple{t.tail, t.relation, t.head, true});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return out;
}

}  // namespace

std::vector<KgPath> mine_true_paths(const Graph& graph, const QaExample& qa,
                                    const MiningOptions& options) {
  if (options.max_hops == 0) throw Error(ErrorCode::kContract, "max_hops must be >= 1");
  std::unordered_set<std::string> answers(qa.answers.begin(), qa.answers.end());

  // BFS distances from each question entity; the global minimum over
  // reachable answers fixes the path length.
  std::vector<std::unordered_map<std::string, std::size_t>> dist(
      qa.question_entities.size());
  std::size_t best = options.max_hops + 1;
  for (std::size_t q = 0; q < qa.question_entities.size(); ++q) {
    const auto& src = qa.question_entities[q];
    if (!graph.has_entity(src)) continue;
    auto& d = dist[q];
    d[src] = 0;
    std::vector<std::string> frontier{src};
    for (std::size_t depth = 0; depth < options.max_hops && !frontier.empty(); ++depth) {
      std::vector<std::string> next;
      for (const auto& e : frontier) {
        for (const auto& [idx, t] : walk_edges(graph, e, options.traverse_inverse)) {
          if (d.emplace(t.tail, depth + 1).second) next.push_back(t.tail);
        }
      }
      frontier = std::move(next);
    }
    for (const auto& a : qa.answers) {
      auto it = d.find(a);
      if (it != d.end() && it->second > 0) best = std::min(best, it->second);
    }
  }
  std::vector<KgPath> out;
  if (best > options.max_hops) return out;

  for (std::size_t q = 0; q < qa.question_entities.size() && out.size() < options.max_paths;
       ++q) {
    const auto& d = dist[q];
    if (d.empty()) continue;
    KgPath path;
    // Walk the BFS layering: each edge must advance the distance by one.
    auto dfs = [&](auto&& self, const std::string& at, std::size_t depth) -> void {
      if (out.size() >= options.max_paths) return;
      if (depth == best) {
        if (answers.count(at)) out.push_back(path);
        return;
      }
      for (const auto& [idx, t] : walk_edges(graph, at, options.traverse_inverse)) {
        auto it = d.find(t.tail);
        if (it == d.end() || it->second != depth + 1) continue;
        path.steps.push_back(t);
        self(self, t.tail, depth + 1);
        path.steps.pop_back();
        if (out.size() >= options.max_paths) return;
      }
    };
    dfs(dfs, qa.question_entities[q], 0);
  }
  return out;
}

KgPath corrupt_kg_path(const KgPath& path, const Graph& graph, Corruption kind,
                       std::uint64_t seed) {
  if (path.steps.empty()) throw Error(ErrorCode::kContract, "empty path");
  if (graph.entities().size() < 2 || graph.relations().size() < 2) {
    throw Error(ErrorCode::kContract, "graph needs >= 2 entities and >= 2 relations");
  }
  std::mt19937_64 rng(seed);
  const std::size_t n = path.steps.size();

  switch (kind) {
    case Corruption::kFactual: {
      // Slots: (step, head=0 / tail=1), visited from a random start.
      const std::size_t slots = 2 * n;
      const std::size_t start = uniform_index(rng, slots);
      for (std::size_t k = 0; k < slots; ++k) {
        const std::size_t slot = (start + k) % slots;
        const std::size_t step = slot / 2;
        const bool tail = slot % 2 == 1;
        const Triple& orig = path.steps[step];
        const std::string& current = tail ? orig.tail : orig.head;
        std::vector<const std::string*> options;
        for (const auto& e : graph.entities()) {
          if (e == current) continue;
          Triple t = orig;
          (tail ? t.tail : t.head) = e;
          if (!graph.contains(t)) options.push_back(&e);
        }
        if (options.empty()) continue;
        KgPath out = path;
        (tail ? out.steps[step].tail : out.steps[step].head) =
            *options[uniform_index(rng, options.size())];
        return out;
      }
      throw Error(ErrorCode::kNotApplicable, "no ungrounded entity replacement exists");
    }
    case Corruption::kLogical: {
      const std::size_t start = uniform_index(rng, n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t step = (start + k) % n;
        const Triple& orig = path.steps[step];
        std::vector<const std::string*> options;
        for (const auto& r : graph.relations()) {
          if (r == orig.relation) continue;
          Triple t = orig;
          t.relation = r;
          if (!graph.contains(t)) options.push_back(&r);
        }
        if (options.empty()) continue;
        KgPath out = path;
        out.steps[step].relation = *options[uniform_index(rng, options.size())];
        return out;
      }
      throw Error(ErrorCode::kNotApplicable, "no ungrounded relation replacement exists");
    }
    case Corruption::kBreak: {
      if (n < 2) {
        throw Error(ErrorCode::kNotApplicable, "break needs a path of >= 2 steps");
      }
      const std::size_t start = uniform_index(rng, n - 1);
      for (std::size_t k = 0; k < n - 1; ++k) {
        const std::size_t step = 1 + (start + k) % (n - 1);
        const std::string& prev_tail = path.steps[step - 1].tail;
        std::vector<std::size_t> options;
        for (std::size_t i = 0; i < graph.size(); ++i) {
          if (graph.triples()[i].head != prev_tail) options.push_back(i);
        }
        if (options.empty()) continue;
        KgPath out = path;
        out.steps[step] = graph.triples()[options[uniform_index(rng, options.size())]];
        return out;
      }
      throw Error(ErrorCode::kNotApplicable, "no disconnected replacement triple exists");
    }
    case Corruption::kSkip:
    case Corruption::kRedundant:
      break;
  }
  throw Error(ErrorCode::kNotApplicable,
              std::string(to_string(kind)) + " is not a KG corruption");
}

namespace {

const std::regex& step_grammar() {
  static const std::regex re(R"(^(\S+) (\S+) (\S+?)\.(?: The answer is (\S+?)\.)?$)");
  return re;
}

// Entity mention slots of a step body: grammar steps expose head and tail,
// free text exposes every whitespace token naming a graph entity.
struct Mention {
  std::size_t step;
  std::size_t token;
};

std::vector<std::string> body_tokens(const std::string& body) {
  return split_whitespace(body);
}

std::string strip_period(const std::string& tok) {
  if (!tok.empty() && tok.back() == '.') return tok.substr(0, tok.size() - 1);
  return tok;
}

}  // namespace

Cot corrupt_cot(const Cot& cot, const Graph& graph,
                std::span<const std::string> distractor_pool, Corruption kind,
                std::uint64_t seed) {
  if (cot.steps.empty()) throw Error(ErrorCode::kContract, "empty CoT");
  std::mt19937_64 rng(seed);
  const std::size_t n = cot.steps.size();

  switch (kind) {
    case Corruption::kFactual: {
      if (graph.entities().size() < 2) {
        throw Error(ErrorCode::kContract, "graph needs >= 2 entities");
      }
      std::vector<Mention> mentions;
      for (std::size_t s = 0; s < n; ++s) {
        if (std::regex_match(cot.steps[s], step_grammar())) {
          mentions.push_back({s, 0});
          mentions.push_back({s, 2});
          continue;
        }
        auto toks = body_tokens(cot.steps[s]);
        for (std::size_t k = 0; k < toks.size(); ++k) {
          if (graph.has_entity(strip_period(toks[k]))) mentions.push_back({s, k});
        }
      }
      if (mentions.empty()) {
        throw Error(ErrorCode::kNotApplicable, "no entity mention to corrupt");
      }
      const std::size_t start = uniform_index(rng, mentions.size());
      for (std::size_t k = 0; k < mentions.size(); ++k) {
        const Mention m = mentions[(start + k) % mentions.size()];
        auto toks = body_tokens(cot.steps[m.step]);
        const std::string raw = toks[m.token];
        const std::string current = strip_period(raw);
        const bool had_period = raw != current;
        std::smatch match;
        const bool grammar = std::regex_match(cot.steps[m.step], match, step_grammar());
        std::vector<const std::string*> options;
        for (const auto& e : graph.entities()) {
          if (e == current) continue;
          if (grammar) {
            auto t = parse_triple(match[1].str() + " " + match[2].str() + " " +
                                  match[3].str());
            if (t) {
              (m.token == 0 ? t->head : t->tail) = e;
              if (graph.contains(*t)) continue;
            }
          }
          options.push_back(&e);
        }
        if (options.empty()) continue;
        toks[m.token] = *options[uniform_index(rng, options.size())] + (had_period ? "." : "");
        Cot out = cot;
        out.steps[m.step] = join(toks, " ");
        return out;
      }
      throw Error(ErrorCode::kNotApplicable, "no replacement entity available");
    }
    case Corruption::kSkip: {
      if (n < 2) throw Error(ErrorCode::kNotApplicable, "skip needs >= 2 steps");
      Cot out = cot;
      out.steps.erase(out.steps.begin() +
                      static_cast<std::ptrdiff_t>(uniform_index(rng, n - 1)));
      return out;
    }
    case Corruption::kRedundant: {
      if (distractor_pool.empty()) {
        throw Error(ErrorCode::kContract, "empty distractor pool");
      }
      const auto& d = distractor_pool[uniform_index(rng, distractor_pool.size())];
      const std::size_t pos = uniform_index(rng, n + 1);
      Cot out = cot;
      out.steps.insert(out.steps.begin() + static_cast<std::ptrdiff_t>(pos), d);
      return out;
    }
    case Corruption::kLogical:
    case Corruption::kBreak:
      break;
  }
  throw Error(ErrorCode::kNotApplicable,
              std::string(to_string(kind)) + " is not a CoT corruption");
}

std::string triple_sentence(const Triple& triple) {
  return render_triple(triple) + ".";
}

Cot kg_path_to_cot(const KgPath& path) {
  if (path.steps.empty()) throw Error(ErrorCode::kContract, "empty path");
  Cot cot;
  for (const auto& t : path.steps) cot.steps.push_back(triple_sentence(t));
  return cot;
}

KgPath cot_to_kg_path(const Cot& cot) {
  if (cot.steps.empty()) throw Error(ErrorCode::kContract, "empty CoT");
  KgPath path;
  for (std::size_t s = 0; s < cot.steps.size(); ++s) {
    std::smatch m;
    if (!std::regex_match(cot.steps[s], m, step_grammar())) {
      throw ExtractionError(s, "'" + cot.steps[s] + "' does not match the step grammar");
    }
    auto t = parse_triple(m[1].str() + " " + m[2].str() + " " + m[3].str());
    if (!t) throw ExtractionError(s, "cannot parse triple");
    path.steps.push_back(std::move(*t));
  }
  return path;
}

Cot with_answer_clause(const Cot& cot, const std::string& answer) {
  Cot out = cot;
  if (!out.steps.empty()) out.steps.back() += " The answer is " + answer + ".";
  return out;
}

namespace {

std::string pair_id(const QaExample& qa, const char* tag, std::size_t k, std::size_t j) {
  std::string id = qa.id + "#" + tag + std::to_string(k);
  if (j > 0) id += "." + std::to_string(j);
  return id;
}

}  // namespace

std::vector<PreferencePair> generate_kg_pairs(const Graph& graph,
                                              std::span<const QaExample> qa,
                                              const FoundryOptions& options) {
  static constexpr Corruption kCycle[] = {Corruption::kFactual, Corruption::kLogical,
                                          Corruption::kBreak};
  std::vector<PreferencePair> out;
  std::size_t counter = 0;
  for (const auto& q : qa) {
    const auto paths = mine_true_paths(graph, q, options.mining);
    for (std::size_t k = 0; k < paths.size(); ++k) {
      for (std::size_t j = 0; j < options.rejections_per_path; ++j) {
        PreferencePair pair;
        pair.id = pair_id(q, "kg", k, j);
        pair.question = q.question;
        pair.chosen = serialize_kg_path(paths[k]);
        pair.modality = Modality::kKg;
        const std::uint64_t seed = mix_seed(options.seed, fnv1a64(pair.id));
        bool made = false;
        for (std::size_t attempt = 0; attempt < 3 && !made; ++attempt) {
          Corruption kind = kCycle[(counter + attempt) % 3];
          try {
            pair.rejected = serialize_kg_path(corrupt_kg_path(paths[k], graph, kind, seed));
            pair.corruption = kind;
            made = true;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kNotApplicable) throw;
          }
        }
        if (!made) continue;
        ++counter;
        out.push_back(std::move(pair));
      }
    }
  }
  return out;
}

std::vector<PreferencePair> generate_cot_pairs(
    const Graph& graph, std::span<const QaExample> qa,
    std::span<const std::string> distractor_pool, const FoundryOptions& options) {
  static constexpr Corruption kCycle[] = {Corruption::kFactual, Corruption::kSkip,
                                          Corruption::kRedundant};
  std::vector<PreferencePair> out;
  std::size_t counter = 0;
  for (const auto& q : qa) {
    const auto paths = mine_true_paths(graph, q, options.mining);
    for (std::size_t k = 0; k < paths.size(); ++k) {
      const Cot chosen = with_answer_clause(kg_path_to_cot(paths[k]), paths[k].terminal());
      for (std::size_t j = 0; j < options.rejections_per_path; ++j) {
        PreferencePair pair;
        pair.id = pair_id(q, "cot", k, j);
        pair.question = q.question;
        pair.chosen = serialize_cot(chosen);
        pair.modality = Modality::kCot;
        const std::uint64_t seed = mix_seed(options.seed, fnv1a64(pair.id));
        bool made = false;
        for (std::size_t attempt = 0; attempt < 3 && !made; ++attempt) {
          Corruption kind = kCycle[(counter + attempt) % 3];
          try {
            pair.rejected =
                serialize_cot(corrupt_cot(chosen, graph, distractor_pool, kind, seed));
            pair.corruption = kind;
            made = pair.rejected != pair.chosen;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kNotApplicable) throw;
          }
        }
        if (!made) continue;
        ++counter;
        out.push_back(std::move(pair));
      }
    }
  }
  return out;
}

std::vector<std::string> distractor_pool_from_graph(const Graph& graph,
                                                    std::span<const KgPath> paths,
                                                    std::size_t limit) {
  std::unordered_set<std::string> used;
  for (const auto& p : paths) {
    for (const auto& t : p.steps) used.insert(render_triple(t.stored()));
  }
  std::vector<std::string> out;
  for (const auto& t : graph.triples()) {
    if (out.size() >= limit) break;
    if (!used.count(render_triple(t))) out.push_back(triple_sentence(t));
  }
  return out;
}

std::vector<PreferencePair> convert_pairs(std::span<const PreferencePair> pairs) {
  std::vector<PreferencePair> out;
  for (const auto& p : pairs) {
    PreferencePair c = p;
    c.origin = Origin::kConverted;
    c.id = p.id + "~" + (p.modality == Modality::kKg ? "cot" : "kg");
    try {
      if (p.modality == Modality::kKg) {
        c.modality = Modality::kCot;
        c.chosen = serialize_cot(kg_path_to_cot(parse_kg_path(p.chosen)));
        c.rejected = serialize_cot(kg_path_to_cot(parse_kg_path(p.rejected)));
        // The CoT-side label of a KG corruption: entity errors stay factual,
        // relation errors and breaks surface as wrong step content.
        c.corruption = Corruption::kFactual;
      } else {
        c.modality = Modality::kKg;
        c.chosen = serialize_kg_path(cot_to_kg_path(parse_cot(p.chosen)));
        c.rejected = serialize_kg_path(cot_to_kg_path(parse_cot(p.rejected)));
        c.corruption = p.corruption == Corruption::kFactual ? Corruption::kFactual
                                                            : Corruption::kBreak;
      }
    } catch (const Error&) {
      continue;
    }
    if (c.chosen == c.rejected) continue;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace dprm
