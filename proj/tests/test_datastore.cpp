#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "taskseq/datastore.hpp"

using namespace taskseq;

namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("taskseq_ds_" + name);
  fs::remove_all(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DatasetHeader small_header(int problems = 8) {
  DatasetHeader h;
  h.prior.num_tasks = 8;
  h.prior.sequence_length = 8;
  h.num_problems = problems;
  h.random_per_problem = 16;
  h.mutated_per_problem = 16;
  h.seed = 42;
  h.split = "test";
  return h;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.num_tasks = 4;
  cfg.seq_len = 4;
  cfg.d_emb = 8;
  cfg.num_blocks = 1;
  cfg.num_heads = 2;
  cfg.hidden = 8;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("dataset round trip preserves structure") {
  const auto path = temp_path("roundtrip.jsonl");
  const auto header = small_header();
  write_dataset(header, path);
  const auto ds = read_dataset(path);

  CHECK(ds.header.split == "test");
  CHECK(ds.header.seed == 42);
  CHECK(ds.header.num_problems == 8);
  REQUIRE(ds.problems.size() == 8);
  for (std::size_t i = 0; i < ds.problems.size(); ++i) {
    const auto want = generate_problem_record(header, i);
    const auto& got = ds.problems[i];
    CHECK(got.problem.problem_id == want.problem.problem_id);
    CHECK(got.problem.graph.tasks == want.problem.graph.tasks);
    CHECK(got.problem.graph.edges == want.problem.graph.edges);
    CHECK(got.problem.graph.depth == want.problem.graph.depth);
    CHECK(got.problem.optimal == want.problem.optimal);
    REQUIRE(got.random_pool.size() == 16);
    REQUIRE(got.mutated_pool.size() == 16);
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(got.random_pool[j].tasks == want.random_pool[j].tasks);
      CHECK(got.mutated_pool[j].tasks == want.mutated_pool[j].tasks);
    }
  }
  validate_dataset(ds);
  fs::remove(path);
}

TEST_CASE("dataset writes are byte-identical across runs and worker counts") {
  const auto a = temp_path("det_a.jsonl");
  const auto b = temp_path("det_b.jsonl");
  const auto c = temp_path("det_c.jsonl");
  write_dataset(small_header(), a);
  write_dataset(small_header(), b);
  write_dataset(small_header(), c, /*workers=*/2);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) == slurp(c));
  fs::remove(a);
  fs::remove(b);
  fs::remove(c);
}

TEST_CASE("dataset corruption and truncation are detected") {
  const auto path = temp_path("corrupt.jsonl");
  write_dataset(small_header(4), path);
  auto text = slurp(path);

  // flip one byte inside a record
  const auto tamper = path + ".tampered";
  {
    auto copy = text;
    const auto pos = copy.find("\"seed\":");
    copy[pos + 8] = copy[pos + 8] == '1' ? '2' : '1';
    std::ofstream out(tamper, std::ios::binary);
    out << copy;
  }
  CHECK_THROWS_WITH_AS(read_dataset(tamper), doctest::Contains("checksum"),
                       std::runtime_error);

  // drop the final lines entirely (checksum line and one record)
  const auto truncated = path + ".truncated";
  {
    const auto cut = text.rfind("{\"problem_id\"");
    std::ofstream out(truncated, std::ios::binary);
    out << text.substr(0, cut);
  }
  CHECK_THROWS(read_dataset(truncated));

  fs::remove(path);
  fs::remove(tamper);
  fs::remove(truncated);
}

TEST_CASE("checkpoint round trip reproduces logits bit-exactly") {
  const auto path = temp_path("model.ckpt");
  ModelConfig cfg = tiny_model();
  Pftsn model(cfg, 9);
  save_checkpoint(model, path);
  const Pftsn loaded = load_checkpoint(path);

  CHECK(loaded.config().num_tasks == cfg.num_tasks);
  CHECK(loaded.config().temperature == cfg.temperature);

  // probe input
  ContextBatch ctx;
  Rng rng(10);
  const std::vector<TaskSeq> optimal{{0, 1, 2, 3}};
  for (int i = 0; i < 3; ++i) {
    LabeledSequence s;
    s.tasks = sample_random(1, 4, 4, rng).front();
    s.utility = utility_vector(s.tasks, optimal);
    ctx.sequences.push_back(std::move(s));
  }
  const auto x = Pftsn::encode_inputs({ctx}, cfg);
  const TaskSeq prefix{cfg.bos_id(), 1, 2, 0};
  const auto a =
      model.predict_logits(model.encode_target({prefix}), model.encode_context(x));
  const auto b =
      loaded.predict_logits(loaded.encode_target({prefix}), loaded.encode_context(x));
  CHECK(a.values() == b.values());

  // save -> load -> save is byte-stable
  const auto path2 = temp_path("model2.ckpt");
  save_checkpoint(loaded, path2);
  CHECK(slurp(path) == slurp(path2));
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("checkpoint manifest corruption names the parameter") {
  const auto path = temp_path("bad.ckpt");
  Pftsn model(tiny_model(), 11);
  save_checkpoint(model, path);
  auto blob = slurp(path);

  // rename a parameter inside the header and fix up the trailing checksum
  const auto pos = blob.find("w_in.weight");
  REQUIRE(pos != std::string::npos);
  blob[pos] = 'x';
  // recompute checksum over everything but the final 8 bytes
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i + 8 < blob.size(); ++i) {
    h ^= static_cast<unsigned char>(blob[i]);
    h *= 0x100000001b3ull;
  }
  for (int i = 0; i < 8; ++i)
    blob[blob.size() - 8 + static_cast<std::size_t>(i)] =
        static_cast<char>((h >> (8 * i)) & 0xff);
  {
    std::ofstream out(path, std::ios::binary);
    out << blob;
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("x_in.weight"),
                       std::runtime_error);
  fs::remove(path);
}

TEST_CASE("trace files round trip") {
  const auto path = temp_path("traces.jsonl");
  TraceFileHeader header;
  header.method = "random";
  header.iterations = 3;
  header.init_context = 2;
  header.seed = 5;
  header.num_tasks = 4;
  header.sequence_length = 4;
  header.problems = "suite";

  std::vector<Trace> traces(2);
  traces[0].problem_id = "p0";
  traces[0].method = "random";
  traces[0].initial_best = 2.5;
  for (int i = 0; i < 3; ++i) {
    TraceStep s;
    s.proposed = {0, 1, 2, 3};
    s.utility = {1.0, 0.5, 0.25, 0.125};
    s.u_bar = 1.875;
    s.best_u_bar = std::max(2.5, s.u_bar);
    s.proposal_seconds = 0.001 * (i + 1);
    traces[0].steps.push_back(s);
  }
  traces[1].problem_id = "p1";
  traces[1].method = "random";
  traces[1].partial = true;
  traces[1].error = "proposer exploded";

  write_traces(header, traces, path);
  const auto [h2, loaded] = read_traces(path);
  CHECK(h2.method == "random");
  CHECK(h2.iterations == 3);
  CHECK(h2.problems == "suite");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].initial_best == 2.5);
  REQUIRE(loaded[0].steps.size() == 3);
  CHECK(loaded[0].steps[1].proposed == TaskSeq{0, 1, 2, 3});
  CHECK(loaded[0].steps[1].utility == UtilityVector{1.0, 0.5, 0.25, 0.125});
  CHECK(loaded[1].partial);
  CHECK(loaded[1].error == "proposer exploded");
  fs::remove(path);
}
