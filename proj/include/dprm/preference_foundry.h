#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dprm/kg_store.h"

namespace dprm {

enum class Modality { kKg, kCot };
enum class Corruption { kFactual, kLogical, kBreak, kSkip, kRedundant };
enum class Origin { kNative, kConverted };

const char* to_string(Modality m);
const char* to_string(Corruption c);
const char* to_string(Origin o);
Modality parse_modality(const std::string& s);
Corruption parse_corruption(const std::string& s);
Origin parse_origin(const std::string& s);

// Chain of thought. Steps hold the sentence bodies; numbering ("Step k: ") is
// applied on rendering, so insertions and deletions renumber for free.
struct Cot {
  std::vector<std::string> steps;

  bool operator==(const Cot&) const = default;
};

// "Step k: <body>" per step.
std::vector<std::string> cot_lines(const Cot& cot);
std::string serialize_cot(const Cot& cot);
// Splits on newlines and strips any "Step k:" prefix.
Cot parse_cot(const std::string& text);

struct QaExample {
  std::string id;
  std::string question;
  std::vector<std::string> question_entities;
  std::vector<std::string> answers;
};

struct PreferencePair {
  std::string id;
  std::string question;
  std::string chosen;
  std::string rejected;
  Modality modality = Modality::kKg;
  Corruption corruption = Corruption::kFactual;
  Origin origin = Origin::kNative;

  // Throws Error(kContract) if chosen == rejected or the corruption kind does
  // not belong to the modality.
  void validate() const;
};

bool corruption_valid_for(Modality modality, Corruption corruption);

void write_pairs_jsonl(std::ostream& out, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_pairs_jsonl(std::istream& in);
void write_qa_jsonl(std::ostream& out, std::span<const QaExample> qa);
std::vector<QaExample> read_qa_jsonl(std::istream& in);

struct MiningOptions {
  std::size_t max_hops = 4;
  std::size_t max_paths = 4;
  // Also walk edges backwards, producing inverted triples.
  bool traverse_inverse = false;
};

// Shortest question-entity -> answer-entity paths, ordered by question entity
// then by the load indices of the edges taken.
std::vector<KgPath> mine_true_paths(const Graph& graph, const QaExample& qa,
                                    const MiningOptions& options = {});

KgPath corrupt_kg_path(const KgPath& path, const Graph& graph, Corruption kind,
                       std::uint64_t seed);

// `graph` supplies the replacement entities for factual corruption.
Cot corrupt_cot(const Cot& cot, const Graph& graph,
                std::span<const std::string> distractor_pool, Corruption kind,
                std::uint64_t seed);

// Body of a template step: "h r t." ("~r" for inverted triples).
std::string triple_sentence(const Triple& triple);
Cot kg_path_to_cot(const KgPath& path);
// Step grammar: "<head> <relation> <tail>." optionally followed by
// " The answer is <entity>.". Throws ExtractionError on the first step that
// does not match.
KgPath cot_to_kg_path(const Cot& cot);
// Appends " The answer is <tail>." to the final step.
Cot with_answer_clause(const Cot& cot, const std::string& answer);

struct FoundryOptions {
  MiningOptions mining;
  std::uint64_t seed = 0;
  // Rejected samples paired with each mined true path. Pair ids are
  // "<qa id>#kg<k>" for the first and "<qa id>#kg<k>.<j>" after.
  std::size_t rejections_per_path = 1;
};

// `rejections_per_path` rejected samples per mined true path; kinds cycle
// factual, logical, break (break falls through to the next kind for
// single-step paths).
std::vector<PreferencePair> generate_kg_pairs(const Graph& graph,
                                              std::span<const QaExample> qa,
                                              const FoundryOptions& options);

// Native CoTs are template renderings of the true paths closed with an answer
// clause; kinds cycle factual, skip, redundant.
std::vector<PreferencePair> generate_cot_pairs(
    const Graph& graph, std::span<const QaExample> qa,
    std::span<const std::string> distractor_pool, const FoundryOptions& options);

// Template bodies of every graph triple not used by any of `paths`.
std::vector<std::string> distractor_pool_from_graph(const Graph& graph,
                                                    std::span<const KgPath> paths,
                                                    std::size_t limit);

// KG pairs become CoT pairs and vice versa, tagged origin=converted. Pairs
// whose conversion fails or collapses chosen == rejected are dropped.
std::vector<PreferencePair> convert_pairs(std::span<const PreferencePair> pairs);

}  // namespace dprm
