#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dprm/kg_store.h"
#include "dprm/preference_foundry.h"

namespace dprm {

// Typed random graph with entities e000..e{n-1} and relations r00..r{k-1}
// (names zero-padded to a common width). Entities and relations are split
// into `num_types` types; a relation of type j leads from an entity of type j
// to a random entity of type j + 1 (mod num_types). Every entity has one edge
// per relation of its type, so each (head, relation) pair has exactly one
// tail and relation chains follow the type order.
struct PlantedGraphOptions {
  std::size_t num_entities = 240;
  std::size_t num_relations = 12;
  std::size_t num_types = 4;
  std::uint64_t seed = 1;
};

Graph planted_graph(const PlantedGraphOptions& options);

// Questions that name a start entity and a chain of distinct relations. A
// question is kept only when the chain is the unique shortest path to its
// answer, so mined paths coincide with the planted chain.
struct PlantedQaOptions {
  std::size_t count = 200;
  std::size_t min_hops = 2;
  std::size_t max_hops = 3;
  std::uint64_t seed = 2;
  std::string id_prefix = "q";
};

std::vector<QaExample> planted_qa(const Graph& graph, const PlantedQaOptions& options);

std::string planted_question(const std::string& start,
                             const std::vector<std::string>& relations);

// Vocabulary covering serialized KG paths, template CoTs and planted questions
// over `graph`: markers, step words, digits, entities, relations and inverse
// relations. "?" closes planted questions, so the first context of a
// completion is (start entity, "?").
std::vector<std::string> toy_vocabulary(const Graph& graph);

}  // namespace dprm
