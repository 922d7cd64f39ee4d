#include "dprm/synthetic.h"

#include <algorithm>
#include <random>
#include <unordered_set>

#include "dprm/error.h"
#include "dprm/random.h"

namespace dprm {

namespace {

// Fixed-width names, so no name is a substring of another.
std::string padded_name(char prefix, std::size_t i, std::size_t count) {
  const std::size_t width = std::to_string(count - 1).size();
  std::string digits = std::to_string(i);
  return prefix + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

Graph planted_graph(const PlantedGraphOptions& options) {
  const std::size_t types = options.num_types;
  if (types == 0 || options.num_entities < 2 * types ||
      options.num_relations < types || options.num_relations % types != 0) {
    throw Error(ErrorCode::kContract, "bad planted graph options");
  }
  std::mt19937_64 rng(options.seed);
  // Entity i has type i % types; relation k maps type k % types to the next
  // type. Tails are drawn uniformly from the members of the target type.
  std::vector<std::vector<std::size_t>> members(types);
  for (std::size_t i = 0; i < options.num_entities; ++i) members[i % types].push_back(i);
  std::vector<Triple> triples;
  for (std::size_t h = 0; h < options.num_entities; ++h) {
    const std::size_t type = h % types;
    const auto& targets = members[(type + 1) % types];
    for (std::size_t k = type; k < options.num_relations; k += types) {
      std::size_t t = targets[uniform_index(rng, targets.size())];
      if (t == h) t = targets[(std::find(targets.begin(), targets.end(), t) -
                               targets.begin() + 1) % targets.size()];
      triples.push_back({padded_name('e', h, options.num_entities),
                         padded_name('r', k, options.num_relations),
                         padded_name('e', t, options.num_entities), false});
    }
  }
  return Graph::from_triples(std::move(triples));
}

std::string planted_question(const std::string& start,
                             const std::vector<std::string>& relations) {
  std::string q = "Following";
  for (std::size_t i = 0; i < relations.size(); ++i) {
    q += (i == 0 ? " " : " then ") + relations[i];
  }
  return q + " , which entity is reached from " + start + " ?";
}

std::vector<QaExample> planted_qa(const Graph& graph, const PlantedQaOptions& options) {
  if (graph.empty()) throw Error(ErrorCode::kEmptyGraph, "planted_qa on empty graph");
  if (options.min_hops == 0 || options.min_hops > options.max_hops) {
    throw Error(ErrorCode::kContract, "bad hop range");
  }
  std::mt19937_64 rng(options.seed);
  const auto& entities = graph.entities();
  const std::size_t span = options.max_hops - options.min_hops + 1;
  std::vector<QaExample> out;
  std::unordered_set<std::string> seen;
  MiningOptions mining;
  mining.max_hops = options.max_hops;
  mining.max_paths = 2;
  const std::size_t budget = options.count * 200 + 1000;
  for (std::size_t attempt = 0; out.size() < options.count && attempt < budget; ++attempt) {
    const std::size_t hops = options.min_hops + uniform_index(rng, span);
    std::string cur = entities[uniform_index(rng, entities.size())];
    const std::string start = cur;
    KgPath path;
    std::unordered_set<std::string> visited{cur};
    std::unordered_set<std::string> used_relations;
    for (std::size_t k = 0; k < hops; ++k) {
      std::vector<std::size_t> options_here;
      for (auto idx : graph.by_head(cur)) {
        const Triple& t = graph.triples()[idx];
        if (!used_relations.count(t.relation) && !visited.count(t.tail)) {
          options_here.push_back(idx);
        }
      }
      if (options_here.empty()) break;
      const Triple& t = graph.triples()[options_here[uniform_index(rng, options_here.size())]];
      path.steps.push_back(t);
      used_relations.insert(t.relation);
      visited.insert(t.tail);
      cur = t.tail;
    }
    if (path.size() != hops) continue;
    std::vector<std::string> relations;
    for (const auto& t : path.steps) relations.push_back(t.relation);
    QaExample qa;
    qa.question = planted_question(start, relations);
    if (seen.count(qa.question)) continue;
    qa.question_entities = {start};
    qa.answers = {path.terminal()};
    const auto mined = mine_true_paths(graph, qa, mining);
    if (mined.size() != 1 || !(mined.front() == path)) continue;
    qa.id = options.id_prefix + std::to_string(out.size());
    seen.insert(qa.question);
    out.push_back(std::move(qa));
  }
  if (out.size() < options.count) {
    throw Error(ErrorCode::kContract, "could not plant " + std::to_string(options.count) +
                                          " questions; got " + std::to_string(out.size()));
  }
  return out;
}

std::vector<std::string> toy_vocabulary(const Graph& graph) {
  std::vector<std::string> vocab = {"$", ";", ":", ".", "?", "Step", "The", "answer", "is"};
  for (int d = 0; d <= 9; ++d) vocab.push_back(std::to_string(d));
  std::unordered_set<std::string> have(vocab.begin(), vocab.end());
  auto add = [&](const std::string& tok) {
    if (have.insert(tok).second) vocab.push_back(tok);
  };
  for (const auto& e : graph.entities()) add(e);
  for (const auto& r : graph.relations()) add(r);
  for (const auto& r : graph.relations()) add("~" + r);
  return vocab;
}

}  // namespace dprm
