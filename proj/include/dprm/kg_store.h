#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace dprm {

// A KG edge as used in a reasoning path. head/tail are always the effective
// (path-facing) orientation; when `inverted` is set the stored edge is
// (tail, relation, head).
struct Triple {
  std::string head;
  std::string relation;
  std::string tail;
  bool inverted = false;

  // The edge as it is stored in the graph.
  Triple stored() const;

  bool operator==(const Triple&) const = default;
};

struct KgPath {
  std::vector<Triple> steps;

  const std::string& source() const { return steps.front().head; }
  const std::string& terminal() const { return steps.back().tail; }
  std::size_t size() const { return steps.size(); }

  bool operator==(const KgPath&) const = default;
};

enum class TripleFormat { kTsv, kJsonl };
enum class Direction { kOut, kIn, kBoth };

// Immutable triple store indexed by head and tail. Load order is preserved
// and used as the deterministic tie-break order everywhere.
class Graph {
 public:
  Graph() = default;

  // Deduplicates (first occurrence wins) and builds all indices.
  static Graph from_triples(std::vector<Triple> triples);

  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }

  // Triple indices, in load order.
  std::span<const std::size_t> by_head(const std::string& entity) const;
  std::span<const std::size_t> by_tail(const std::string& entity) const;

  // Entities and relations in first-seen order.
  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& relations() const { return relations_; }

  bool has_entity(const std::string& entity) const;
  bool has_relation(const std::string& relation) const;
  // Membership of the stored edge (inverted triples are un-inverted first).
  bool contains(const Triple& triple) const;

 private:
  std::vector<Triple> triples_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_head_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_tail_;
  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_set<std::string> entity_set_;
  std::unordered_set<std::string> relation_set_;
  std::unordered_set<std::string> edge_keys_;
};

Graph load_triples(std::istream& in, TripleFormat format);
Graph load_triples_file(const std::string& path);

std::vector<Triple> neighbors(const Graph& graph, const std::string& entity,
                              Direction direction);

// Flips `triple` so that its head lies in `sources`. Throws
// Error(kNotReconstructible) when neither endpoint is a source entity.
Triple reconstruct_triple(const Triple& triple,
                          std::span<const std::string> sources);

struct PathReport {
  bool connected = true;
  bool grounded = true;
  // Smallest i >= 1 with steps[i].head != steps[i-1].tail.
  std::optional<std::size_t> first_break;
  // Smallest i whose stored edge is absent from the graph.
  std::optional<std::size_t> first_ungrounded;
};

PathReport validate_path(const Graph& graph, const KgPath& path);

// "h r t", with the relation written as "~r" for inverted triples.
std::string render_triple(const Triple& triple);
// Parses the render_triple form; "~" on the relation sets `inverted`.
std::optional<Triple> parse_triple(const std::string& text);

// One step per triple: "h r t ;". Steps are joined by a single space.
std::vector<std::string> kg_path_steps(const KgPath& path);
std::string serialize_kg_path(const KgPath& path);
// Inverse of serialize_kg_path. Throws ExtractionError on a malformed step.
KgPath parse_kg_path(const std::string& text);

}  // namespace dprm
