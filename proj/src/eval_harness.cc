#include "dprm/eval_harness.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "dprm/error.h"
#include "dprm/prompts.h"
#include "dprm/text.h"

namespace dprm {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoCotrain: return "no_cotrain";
    case Variant::kNoIteration: return "no_iteration";
    case Variant::kNoBoth: return "no_both";
  }
  return "full";
}

Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::kFull, Variant::kNoCotrain, Variant::kNoIteration,
                 Variant::kNoBoth}) {
    if (s == to_string(v)) return v;
  }
  throw Error(ErrorCode::kParse, "unknown variant '" + s + "'");
}

std::string normalize_answer(const std::string& text) {
  std::string collapsed = join(split_whitespace(to_lower(text)), " ");
  auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0;
  std::size_t e = collapsed.size();
  while (b < e && punct(collapsed[b])) ++b;
  while (e > b && punct(collapsed[e - 1])) --e;
  return trim(collapsed.substr(b, e - b));
}

bool hit_at_1(const std::string& prediction, std::span<const std::string> golds) {
  const std::string p = normalize_answer(prediction);
  return std::any_of(golds.begin(), golds.end(), [&](const std::string& g) {
    const std::string n = normalize_answer(g);
    return !n.empty() && p.find(n) != std::string::npos;
  });
}

double f1_score(std::span<const std::string> predicted, std::span<const std::string> golds) {
  std::set<std::string> p;
  std::set<std::string> g;
  for (const auto& s : predicted) {
    if (auto n = normalize_answer(s); !n.empty()) p.insert(n);
  }
  for (const auto& s : golds) {
    if (auto n = normalize_answer(s); !n.empty()) g.insert(n);
  }
  if (p.empty() || g.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& s : p) common += g.count(s);
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<std::string> split_answers(const std::string& answer) {
  std::vector<std::string> out;
  const std::string delim = prompts::kAnswerDelimiter;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = answer.find(delim, start);
    std::string part = trim(answer.substr(start, pos == std::string::npos
                                                     ? std::string::npos
                                                     : pos - start));
    if (!part.empty()) out.push_back(std::move(part));
    if (pos == std::string::npos) break;
    start = pos + delim.size();
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = to_string(variant);
  j["hit_at_1"] = hit_at_1;
  j["f1"] = f1;
  j["questions"] = rows.size();
  j["config"] = config_echo;
  nlohmann::ordered_json r = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json x;
    x["id"] = row.id;
    x["question"] = row.question;
    x["answer"] = row.answer;
    x["golds"] = row.golds;
    x["hit"] = row.hit;
    x["f1"] = row.f1;
    x["iterations"] = row.iterations;
    if (!row.error.empty()) x["error"] = row.error;
    r.push_back(x);
  }
  j["rows"] = r;
  return j;
}

EvalReport run_eval(std::span<const QaExample> dataset, const Graph& graph,
                    const Embedder& embedder, const ReasonConfig& config,
                    const EvalSetup& setup, Variant variant) {
  if (dataset.empty()) throw Error(ErrorCode::kContract, "empty dataset");
  ReasonConfig cfg = config;
  const bool init_only = variant == Variant::kNoCotrain || variant == Variant::kNoBoth;
  const bool single = variant == Variant::kNoIteration || variant == Variant::kNoBoth;
  cfg.models = init_only ? setup.init_only : setup.full;
  if (single) cfg.max_iterations = 1;
  const ReasoningEngine engine(graph, embedder, cfg);

  EvalReport report;
  report.variant = variant;
  report.config_echo = cfg.to_json();
  report.config_echo["variant"] = to_string(variant);
  report.rows.resize(dataset.size());

  auto work = [&](std::size_t i) {
    const QaExample& qa = dataset[i];
    EvalRow& row = report.rows[i];
    row.id = qa.id;
    row.question = qa.question;
    row.golds = qa.answers;
    try {
      const ReasonResult res = engine.run(qa.question);
      row.answer = res.answer;
      row.iterations = res.state.trace.size();
      row.trace = res.to_json();
      row.hit = hit_at_1(res.answer, qa.answers);
      row.f1 = f1_score(split_answers(res.answer), qa.answers);
    } catch (const EngineError& e) {
      row.error = e.what();
      row.iterations = e.partial().trace.size();
      row.trace = e.partial().to_json();
    } catch (const Error& e) {
      row.error = e.what();
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, setup.parallelism);
  if (threads == 1) {
    for (std::size_t i = 0; i < dataset.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < dataset.size(); i = next++) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  double hits = 0.0;
  double f1 = 0.0;
  for (const auto& row : report.rows) {
    hits += row.hit ? 1.0 : 0.0;
    f1 += row.f1;
  }
  report.hit_at_1 = hits / static_cast<double>(report.rows.size());
  report.f1 = f1 / static_cast<double>(report.rows.size());
  return report;
}

void write_traces(const EvalReport& report, const std::string& directory) {
  std::filesystem::create_directories(directory);
  for (const auto& row : report.rows) {
    std::string name = row.id;
    std::replace_if(name.begin(), name.end(),
                    [](char c) { return c == '/' || c == '\\'; }, '_');
    std::ofstream out(std::filesystem::path(directory) / (name + ".json"));
    if (!out) throw Error(ErrorCode::kContract, "cannot write trace for " + row.id);
    out << row.trace.dump(2) << "\n";
  }
}

}  // namespace dprm
