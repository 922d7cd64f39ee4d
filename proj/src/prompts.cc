#include "dprm/prompts.h"

#include <algorithm>
#include <sstream>

#include "dprm/text.h"

namespace dprm::prompts {

namespace {

constexpr const char* kHeaders[] = {kQuestion, kKnowledge, kPrevious, kCandidates,
                                    kReasoning, kEvidence,  kGraph,    "Answer:",
                                    "Next step:", "Instruction:", "Path:", "Chain:"};

bool is_header(const std::string& line) {
  return std::any_of(std::begin(kHeaders), std::end(kHeaders), [&](const char* h) {
    return line.rfind(h, 0) == 0;
  });
}

std::string answers_line(std::span<const std::string> answers) {
  return join(std::vector<std::string>(answers.begin(), answers.end()), kAnswerDelimiter);
}

const char* corruption_hint(Corruption kind) {
  switch (kind) {
    case Corruption::kFactual: return "replace one entity with a wrong entity";
    case Corruption::kLogical: return "replace one relation with a wrong relation";
    case Corruption::kBreak:
      return "replace one step so that it no longer starts where the previous step ended";
    case Corruption::kSkip: return "delete one intermediate reasoning step";
    case Corruption::kRedundant: return "insert one step unrelated to the question";
  }
  return "";
}

}  // namespace

std::string kg_step(const std::string& question, const std::string& previous_step,
                    std::span<const Triple> candidates) {
  std::ostringstream out;
  out << kQuestion << " " << question << "\n"
      << kPrevious << "\n" << previous_step << "\n\n"
      << kCandidates << "\n";
  for (const auto& t : candidates) out << render_triple(t) << "\n";
  out << "\nInstruction: choose the candidate triple that best continues the "
         "reasoning. If its tail entity appears in the previous step, swap head "
         "and tail and write the relation as ~relation. Reply with one line: "
         "head relation tail\nAnswer:";
  return out.str();
}

std::string cot_step(const std::string& question, const Triple& triple,
                     const Cot& previous) {
  std::ostringstream out;
  out << kQuestion << " " << question << "\n"
      << kKnowledge << " " << triple_sentence(triple) << "\n"
      << kPrevious << "\n";
  for (const auto& line : cot_lines(previous)) out << line << "\n";
  out << "\nInstruction: write the next reasoning step as one sentence built on "
         "the knowledge. When the step reaches the final entity, end it with "
         "\"The answer is <entity>.\"\nNext step:";
  return out.str();
}

std::string soft_graph(const KgPath& path) {
  std::vector<std::string> order;
  std::vector<std::vector<std::string>> edges;
  for (const auto& t : path.steps) {
    auto it = std::find(order.begin(), order.end(), t.head);
    std::size_t k = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) {
      order.push_back(t.head);
      edges.emplace_back();
    }
    edges[k].push_back((t.inverted ? "~" : "") + t.relation + " -> " + t.tail);
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out << order[i] << ": " << join(edges[i], ", ") << "\n";
  }
  return out.str();
}

std::string final_answer(const std::string& question, const Cot& cot,
                         const KgPath& path) {
  std::ostringstream out;
  out << kQuestion << " " << question << "\n" << kReasoning << "\n";
  for (const auto& line : cot_lines(cot)) out << line << "\n";
  out << "\n" << kEvidence << "\n";
  for (const auto& t : path.steps) out << triple_sentence(t) << "\n";
  out << "\n" << kGraph << "\n" << soft_graph(path)
      << "\nInstruction: answer the question using the reasoning and the graph. "
         "List only entity names, separated by \""
      << kAnswerDelimiter << "\".\nAnswer:";
  return out.str();
}

std::string true_kg_sample(const std::string& question,
                           std::span<const std::string> answers) {
  std::ostringstream out;
  out << kQuestion << " " << question << "\nAnswer: " << answers_line(answers)
      << "\nInstruction: write the knowledge graph path from the question entity "
         "to the answer, one triple per step as \"head relation tail ;\".\nPath:";
  return out.str();
}

std::string false_kg_sample(const std::string& path, Corruption kind) {
  std::ostringstream out;
  out << "Path: " << path << "\nInstruction: rewrite the path and "
      << corruption_hint(kind) << ". Keep the format.\nAnswer:";
  return out.str();
}

std::string true_cot_sample(const std::string& question,
                            std::span<const std::string> answers) {
  std::ostringstream out;
  out << kQuestion << " " << question << "\nAnswer: " << answers_line(answers)
      << "\nInstruction: reason step by step, one \"Step k:\" line per step, and "
         "finish with \"The answer is <entity>.\"\n" << kReasoning;
  return out.str();
}

std::string false_cot_sample(const std::string& cot, Corruption kind) {
  std::ostringstream out;
  out << kReasoning << "\n" << cot << "\n\nInstruction: rewrite the reasoning and "
      << corruption_hint(kind) << ". Keep the \"Step k:\" format.\nAnswer:";
  return out.str();
}

std::string kg_to_cot(const std::string& path) {
  std::ostringstream out;
  out << "Path: " << path
      << "\nInstruction: turn every triple into one reasoning step written as "
         "\"Step k: head relation tail.\"\n" << kReasoning;
  return out.str();
}

std::string cot_to_kg(const std::string& cot) {
  std::ostringstream out;
  out << kReasoning << "\n" << cot
      << "\n\nInstruction: extract the triple of every step and connect them into "
         "a path written as \"head relation tail ;\" per step.\nPath:";
  return out.str();
}

std::vector<std::string> section_lines(const std::string& prompt,
                                       const std::string& header) {
  std::vector<std::string> out;
  std::istringstream in(prompt);
  std::string line;
  bool inside = false;
  while (std::getline(in, line)) {
    if (inside) {
      if (trim(line).empty() || is_header(line)) break;
      out.push_back(line);
    } else if (line.rfind(header, 0) == 0) {
      inside = true;
    }
  }
  return out;
}

std::string section_value(const std::string& prompt, const std::string& header) {
  std::istringstream in(prompt);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(header, 0) == 0) return trim(line.substr(header.size()));
  }
  return {};
}

}  // namespace dprm::prompts
