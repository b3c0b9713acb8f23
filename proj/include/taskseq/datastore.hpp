#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taskseq/context.hpp"
#include "taskseq/harness.hpp"
#include "taskseq/model.hpp"
#include "taskseq/prior.hpp"

namespace taskseq {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kTraceFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

struct DatasetHeader {
  int format_version = kDatasetFormatVersion;
  PriorConfig prior;
  int num_problems = 0;
  int random_per_problem = 16;
  int mutated_per_problem = 16;
  std::uint64_t seed = 0;
  std::string split = "train";
  double alpha = kDefaultAlpha;
};

struct ProblemRecord {
  TSProblem problem;  // problem_id and per-problem seed live in problem.config
  std::uint64_t seed = 0;
  std::vector<LabeledSequence> random_pool;
  std::vector<LabeledSequence> mutated_pool;
};

struct Dataset {
  DatasetHeader header;
  std::vector<ProblemRecord> problems;
};

/// Deterministic per-index generation; the building block of write_dataset
/// and of sharded parallel generation.
ProblemRecord generate_problem_record(const DatasetHeader& header, std::size_t index);

/// Generates header.num_problems problems and writes them as line-delimited
/// records (header line, one problem per line, checksum line). Byte-identical
/// across runs and worker counts for equal (header, seed).
void write_dataset(const DatasetHeader& header, const std::string& path,
                   int workers = 1);

Dataset read_dataset(const std::string& path);

/// Recomputes every stored utility from the stored graph; throws on drift
/// beyond the 9-significant-digit serialization precision.
void validate_dataset(const Dataset& dataset);

// ---- checkpoints -------------------------------------------------------

void save_checkpoint(const Pftsn& model, const std::string& path);
Pftsn load_checkpoint(const std::string& path);

// ---- traces --------------------------------------------------------------

struct TraceFileHeader {
  int format_version = kTraceFormatVersion;
  std::string method;
  int iterations = 0;
  int init_context = 0;
  std::uint64_t seed = 0;
  int num_tasks = 0;
  int sequence_length = 0;
  double alpha = kDefaultAlpha;
  std::string problems;  // label of the problem suite evaluated
};

void write_traces(const TraceFileHeader& header, const std::vector<Trace>& traces,
                  const std::string& path);
std::pair<TraceFileHeader, std::vector<Trace>> read_traces(const std::string& path);

}  // namespace taskseq
