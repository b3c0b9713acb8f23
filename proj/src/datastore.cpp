#include "taskseq/datastore.hpp"

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace taskseq {

namespace {

using nlohmann::json;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

// Fixed 9-significant-digit formatting so files are byte-reproducible.
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

void append_int_array(std::string& out, const std::vector<TaskId>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  out += ']';
}

void append_double_array(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt_double(v[i]);
  }
  out += ']';
}

void append_labeled(std::string& out, const LabeledSequence& s) {
  out += "{\"tasks\":";
  append_int_array(out, s.tasks);
  out += ",\"utility\":";
  append_double_array(out, s.utility);
  out += '}';
}

// Line-oriented writer that hashes everything it emits and finishes with a
// checksum line; output goes to a temp file renamed into place on success.
class LineWriter {
 public:
  explicit LineWriter(const std::string& path)
      : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + tmp_);
  }

  void line(const std::string& s) {
    out_ << s << '\n';
    hash_ = fnv1a(hash_, s.data(), s.size());
    hash_ = fnv1a(hash_, "\n", 1);
  }

  void finish() {
    out_ << "{\"checksum\":\"" << hex64(hash_) << "\"}\n";
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + tmp_);
    out_.close();
    std::filesystem::rename(tmp_, path_);
  }

 private:
  std::string path_, tmp_;
  std::ofstream out_;
  std::uint64_t hash_ = kFnvOffset;
};

std::vector<std::string> read_checked_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.empty()) throw std::runtime_error("empty or truncated file: " + path);

  // Verify the trailing checksum when present.
  const auto& last = lines.back();
  if (last.rfind("{\"checksum\":", 0) == 0) {
    std::uint64_t h = kFnvOffset;
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
      h = fnv1a(h, lines[i].data(), lines[i].size());
      h = fnv1a(h, "\n", 1);
    }
    const auto j = json::parse(last);
    if (j.at("checksum").get<std::string>() != hex64(h))
      throw std::runtime_error("checksum failure: " + path);
    lines.pop_back();
  }
  return lines;
}

TaskGraph graph_from_parts(std::vector<TaskId> tasks,
                           std::vector<std::pair<int, int>> edges) {
  TaskGraph g;
  g.tasks = std::move(tasks);
  g.edges = std::move(edges);
  g.depth.assign(g.tasks.size(), 0);
  // Relax depths in topological (Kahn) order, checking the layering.
  std::vector<int> indeg(g.num_nodes(), 0);
  std::vector<std::vector<int>> adj(g.num_nodes());
  for (const auto& [u, v] : g.edges) {
    if (u < 0 || v < 0 || u >= static_cast<int>(g.num_nodes()) ||
        v >= static_cast<int>(g.num_nodes()))
      throw std::runtime_error("dataset graph: edge endpoint out of range");
    indeg[static_cast<std::size_t>(v)]++;
    adj[static_cast<std::size_t>(u)].push_back(v);
  }
  std::vector<int> queue;
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    if (indeg[i] == 0) queue.push_back(static_cast<int>(i));
  std::size_t head = 0, seen = 0;
  while (head < queue.size()) {
    const int u = queue[head++];
    ++seen;
    for (int v : adj[static_cast<std::size_t>(u)]) {
      g.depth[static_cast<std::size_t>(v)] = g.depth[static_cast<std::size_t>(u)] + 1;
      if (--indeg[static_cast<std::size_t>(v)] == 0) queue.push_back(v);
    }
  }
  if (seen != g.num_nodes())
    throw std::runtime_error("dataset graph: cycle detected");
  g.validate();
  return g;
}

LabeledSequence labeled_from_json(const json& j, SequenceSource source) {
  LabeledSequence s;
  s.tasks = j.at("tasks").get<TaskSeq>();
  s.utility = j.at("utility").get<UtilityVector>();
  s.source = source;
  return s;
}

}  // namespace

ProblemRecord generate_problem_record(const DatasetHeader& header, std::size_t index) {
  ProblemRecord rec;
  rec.seed = derive_seed(header.seed, index);
  Rng rng(rec.seed);

  PriorConfig prior = header.prior;
  prior.seed = rec.seed;
  rec.problem = sample_problem(prior, rng);
  char id[64];
  std::snprintf(id, sizeof(id), "%s-%06zu", header.split.c_str(), index);
  rec.problem.problem_id = id;

  const std::set<TaskSeq> members(rec.problem.optimal.begin(),
                                  rec.problem.optimal.end());
  for (int i = 0; i < header.random_per_problem; ++i) {
    TaskSeq seq;
    bool ok = false;
    for (int r = 0; r < 64; ++r) {
      seq = sample_random(1, prior.num_tasks, prior.sequence_length, rng).front();
      if (!members.count(seq)) { ok = true; break; }
    }
    if (!ok)
      throw std::runtime_error("generate_problem_record: no non-optimal random draw");
    LabeledSequence ls;
    ls.tasks = std::move(seq);
    ls.utility = utility_vector(ls.tasks, rec.problem.optimal, header.alpha);
    ls.source = SequenceSource::random;
    rec.random_pool.push_back(std::move(ls));
  }
  for (int i = 0; i < header.mutated_per_problem; ++i) {
    MutationResult m = mutate(rec.problem.optimal, prior.num_tasks, rng);
    if (m.exhausted)
      throw std::runtime_error("generate_problem_record: mutation exhausted");
    LabeledSequence ls;
    ls.tasks = std::move(m.tasks);
    ls.utility = utility_vector(ls.tasks, rec.problem.optimal, header.alpha);
    ls.source = SequenceSource::mutated;
    rec.mutated_pool.push_back(std::move(ls));
  }
  return rec;
}

namespace {

std::string header_line(const DatasetHeader& h) {
  std::string s = "{\"format_version\":" + std::to_string(h.format_version);
  s += ",\"kind\":\"dataset\"";
  s += ",\"split\":\"" + json_escape(h.split) + "\"";
  s += ",\"seed\":" + std::to_string(h.seed);
  s += ",\"num_problems\":" + std::to_string(h.num_problems);
  s += ",\"random_per_problem\":" + std::to_string(h.random_per_problem);
  s += ",\"mutated_per_problem\":" + std::to_string(h.mutated_per_problem);
  s += ",\"alpha\":" + fmt_double(h.alpha);
  s += ",\"prior\":{\"num_tasks\":" + std::to_string(h.prior.num_tasks);
  s += ",\"sequence_length\":" + std::to_string(h.prior.sequence_length);
  s += ",\"k_max\":" + std::to_string(h.prior.k_max);
  s += ",\"optimal_set_cap\":" + std::to_string(h.prior.optimal_set_cap);
  s += "}}";
  return s;
}

std::string problem_line(const ProblemRecord& rec) {
  std::string s = "{\"problem_id\":\"" + json_escape(rec.problem.problem_id) + "\"";
  s += ",\"seed\":" + std::to_string(rec.seed);
  s += ",\"graph\":{\"tasks\":";
  append_int_array(s, rec.problem.graph.tasks);
  s += ",\"edges\":[";
  for (std::size_t i = 0; i < rec.problem.graph.edges.size(); ++i) {
    if (i) s += ',';
    s += '[' + std::to_string(rec.problem.graph.edges[i].first) + ',' +
         std::to_string(rec.problem.graph.edges[i].second) + ']';
  }
  s += "]},\"optimal\":[";
  for (std::size_t i = 0; i < rec.problem.optimal.size(); ++i) {
    if (i) s += ',';
    append_int_array(s, rec.problem.optimal[i]);
  }
  s += "],\"context_random\":[";
  for (std::size_t i = 0; i < rec.random_pool.size(); ++i) {
    if (i) s += ',';
    append_labeled(s, rec.random_pool[i]);
  }
  s += "],\"context_mutated\":[";
  for (std::size_t i = 0; i < rec.mutated_pool.size(); ++i) {
    if (i) s += ',';
    append_labeled(s, rec.mutated_pool[i]);
  }
  s += "]}";
  return s;
}

}  // namespace

void write_dataset(const DatasetHeader& header, const std::string& path, int workers) {
  header.prior.validate();
  if (header.num_problems < 1)
    throw std::invalid_argument("write_dataset: num_problems must be >= 1");
  workers = std::max(1, workers);

  LineWriter out(path);
  out.line(header_line(header));

  const auto total = static_cast<std::size_t>(header.num_problems);
  const std::size_t chunk = std::max<std::size_t>(64, static_cast<std::size_t>(workers) * 64);
  std::vector<ProblemRecord> slots;
  for (std::size_t base = 0; base < total; base += chunk) {
    const std::size_t count = std::min(chunk, total - base);
    slots.assign(count, {});
    if (workers == 1) {
      for (std::size_t i = 0; i < count; ++i)
        slots[i] = generate_problem_record(header, base + i);
    } else {
      std::atomic<std::size_t> cursor{0};
      std::vector<std::thread> pool;
      std::atomic<bool> failed{false};
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
              slots[i] = generate_problem_record(header, base + i);
            } catch (...) {
              failed.store(true);
              return;
            }
          }
        });
      for (auto& t : pool) t.join();
      if (failed.load())
        throw std::runtime_error("write_dataset: problem generation failed");
    }
    for (std::size_t i = 0; i < count; ++i) out.line(problem_line(slots[i]));
  }
  out.finish();
}

Dataset read_dataset(const std::string& path) {
  const auto lines = read_checked_lines(path);
  Dataset ds;
  const auto h = json::parse(lines.front());
  if (h.value("kind", "") != "dataset")
    throw std::runtime_error("not a dataset file: " + path);
  ds.header.format_version = h.at("format_version").get<int>();
  if (ds.header.format_version != kDatasetFormatVersion)
    throw std::runtime_error("unsupported dataset format_version " +
                             std::to_string(ds.header.format_version));
  ds.header.split = h.at("split").get<std::string>();
  ds.header.seed = h.at("seed").get<std::uint64_t>();
  ds.header.num_problems = h.at("num_problems").get<int>();
  ds.header.random_per_problem = h.at("random_per_problem").get<int>();
  ds.header.mutated_per_problem = h.at("mutated_per_problem").get<int>();
  ds.header.alpha = h.at("alpha").get<double>();
  const auto& pr = h.at("prior");
  ds.header.prior.num_tasks = pr.at("num_tasks").get<int>();
  ds.header.prior.sequence_length = pr.at("sequence_length").get<int>();
  ds.header.prior.k_max = pr.at("k_max").get<int>();
  ds.header.prior.optimal_set_cap = pr.at("optimal_set_cap").get<int>();
  ds.header.prior.seed = ds.header.seed;

  std::set<std::string> ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto j = json::parse(lines[i]);
    ProblemRecord rec;
    rec.seed = j.at("seed").get<std::uint64_t>();
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("graph").at("edges"))
      edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    rec.problem.graph =
        graph_from_parts(j.at("graph").at("tasks").get<TaskSeq>(), std::move(edges));
    rec.problem.optimal = j.at("optimal").get<std::vector<TaskSeq>>();
    rec.problem.config = ds.header.prior;
    rec.problem.config.seed = rec.seed;
    rec.problem.problem_id = j.at("problem_id").get<std::string>();
    if (!ids.insert(rec.problem.problem_id).second)
      throw std::runtime_error("duplicate problem_id: " + rec.problem.problem_id);
    for (const auto& c : j.at("context_random"))
      rec.random_pool.push_back(labeled_from_json(c, SequenceSource::random));
    for (const auto& c : j.at("context_mutated"))
      rec.mutated_pool.push_back(labeled_from_json(c, SequenceSource::mutated));
    ds.problems.push_back(std::move(rec));
  }
  if (static_cast<int>(ds.problems.size()) != ds.header.num_problems)
    throw std::runtime_error("truncated dataset: expected " +
                             std::to_string(ds.header.num_problems) + " problems, got " +
                             std::to_string(ds.problems.size()));
  return ds;
}

void validate_dataset(const Dataset& dataset) {
  for (const auto& rec : dataset.problems) {
    const auto optimal = enumerate_optimal(rec.problem.graph);
    if (optimal != rec.problem.optimal)
      throw std::runtime_error("validate_dataset: stored optimal set mismatch for " +
                               rec.problem.problem_id);
    auto check = [&](const std::vector<LabeledSequence>& pool) {
      for (const auto& s : pool) {
        const auto u = utility_vector(s.tasks, rec.problem.optimal, dataset.header.alpha);
        for (std::size_t k = 0; k < u.size(); ++k) {
          const double stored = s.utility[k];
          // stored values carry 9 significant digits
          if (std::abs(stored - u[k]) > 1e-8 * std::max(1.0, std::abs(u[k])))
            throw std::runtime_error("validate_dataset: utility drift for " +
                                     rec.problem.problem_id);
        }
      }
    };
    check(rec.random_pool);
    check(rec.mutated_pool);
  }
}

// ---- checkpoints -------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

std::uint32_t get_u32(const std::string& s, std::size_t& pos) {
  if (pos + 4 > s.size()) throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

std::uint64_t get_u64(const std::string& s, std::size_t& pos) {
  if (pos + 8 > s.size()) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

double get_f64(const std::string& s, std::size_t& pos) {
  const std::uint64_t bits = get_u64(s, pos);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

constexpr char kCkptMagic[9] = "TSQCKPT1";

}  // namespace

void save_checkpoint(const Pftsn& model, const std::string& path) {
  const auto& cfg = model.config();
  json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["model"] = {{"num_tasks", cfg.num_tasks},   {"seq_len", cfg.seq_len},
                     {"d_emb", cfg.d_emb},           {"num_blocks", cfg.num_blocks},
                     {"num_heads", cfg.num_heads},   {"hidden", cfg.hidden},
                     {"dropout", cfg.dropout},       {"temperature", cfg.temperature}};
  header["encoding"] = {{"task_id_norm", "id_over_n"},
                        {"bos_id", cfg.bos_id()},
                        {"unknown_utility", -1.0},
                        {"w_in_bias", true}};
  json params = json::array();
  for (const auto& p : model.parameters())
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  header["params"] = std::move(params);

  std::string blob;
  blob.append(kCkptMagic, 8);
  const std::string hdr = header.dump();
  put_u32(blob, static_cast<std::uint32_t>(hdr.size()));
  blob += hdr;
  for (const auto& p : model.parameters())
    for (double v : p.tensor.values()) put_f64(blob, v);
  put_u64(blob, fnv1a(kFnvOffset, blob.data(), blob.size()));

  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + tmp);
  out.close();
  std::filesystem::rename(tmp, path);
}

Pftsn load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();
  if (blob.size() < 20 || blob.compare(0, 8, kCkptMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);

  std::size_t tail = blob.size() - 8;
  const std::uint64_t expect = fnv1a(kFnvOffset, blob.data(), tail);
  std::size_t pos = tail;
  if (get_u64(blob, pos) != expect)
    throw std::runtime_error("checkpoint checksum failure: " + path);

  pos = 8;
  const std::uint32_t hlen = get_u32(blob, pos);
  if (pos + hlen > tail) throw std::runtime_error("checkpoint truncated: " + path);
  const auto header = json::parse(blob.substr(pos, hlen));
  pos += hlen;

  if (header.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint format_version");
  const auto& m = header.at("model");
  ModelConfig cfg;
  cfg.num_tasks = m.at("num_tasks").get<int>();
  cfg.seq_len = m.at("seq_len").get<int>();
  cfg.d_emb = m.at("d_emb").get<int>();
  cfg.num_blocks = m.at("num_blocks").get<int>();
  cfg.num_heads = m.at("num_heads").get<int>();
  cfg.hidden = m.at("hidden").get<int>();
  cfg.dropout = m.at("dropout").get<double>();
  cfg.temperature = m.at("temperature").get<double>();

  const auto expected = Pftsn::manifest(cfg);
  const auto& stored = header.at("params");
  if (stored.size() != expected.size())
    throw std::runtime_error("checkpoint manifest: expected " +
                             std::to_string(expected.size()) + " parameters, found " +
                             std::to_string(stored.size()));
  Pftsn model(cfg, 0);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto name = stored[i].at("name").get<std::string>();
    const auto shape = stored[i].at("shape").get<Shape>();
    if (name != expected[i].first || shape != expected[i].second)
      throw std::runtime_error("checkpoint manifest mismatch at parameter '" + name +
                               "' (expected '" + expected[i].first + "' with shape " +
                               shape_str(expected[i].second) + ", found shape " +
                               shape_str(shape) + ")");
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = get_f64(blob, pos);
    model.set_parameter(name, values);
  }
  if (pos != tail)
    throw std::runtime_error("checkpoint has trailing bytes: " + path);
  return model;
}

// ---- traces --------------------------------------------------------------

void write_traces(const TraceFileHeader& header, const std::vector<Trace>& traces,
                  const std::string& path) {
  LineWriter out(path);
  std::string h = "{\"format_version\":" + std::to_string(header.format_version);
  h += ",\"kind\":\"traces\"";
  h += ",\"method\":\"" + json_escape(header.method) + "\"";
  h += ",\"iterations\":" + std::to_string(header.iterations);
  h += ",\"init_context\":" + std::to_string(header.init_context);
  h += ",\"seed\":" + std::to_string(header.seed);
  h += ",\"num_tasks\":" + std::to_string(header.num_tasks);
  h += ",\"sequence_length\":" + std::to_string(header.sequence_length);
  h += ",\"alpha\":" + fmt_double(header.alpha);
  h += ",\"problems\":\"" + json_escape(header.problems) + "\"}";
  out.line(h);

  for (const auto& t : traces) {
    std::string s = "{\"problem_id\":\"" + json_escape(t.problem_id) + "\"";
    s += ",\"initial_best_u_bar\":" + fmt_double(t.initial_best) + "}";
    out.line(s);
    int it = 0;
    for (const auto& step : t.steps) {
      std::string l = "{\"problem_id\":\"" + json_escape(t.problem_id) + "\"";
      l += ",\"iteration\":" + std::to_string(++it);
      l += ",\"proposed\":";
      append_int_array(l, step.proposed);
      l += ",\"utility\":";
      append_double_array(l, step.utility);
      l += ",\"u_bar\":" + fmt_double(step.u_bar);
      l += ",\"best_u_bar\":" + fmt_double(step.best_u_bar);
      l += ",\"proposal_seconds\":" + fmt_double(step.proposal_seconds);
      l += "}";
      out.line(l);
    }
    if (t.partial) {
      std::string l = "{\"problem_id\":\"" + json_escape(t.problem_id) + "\"";
      l += ",\"partial\":true,\"error\":\"" + json_escape(t.error) + "\"}";
      out.line(l);
    }
  }
  out.finish();
}

std::pair<TraceFileHeader, std::vector<Trace>> read_traces(const std::string& path) {
  const auto lines = read_checked_lines(path);
  const auto h = json::parse(lines.front());
  if (h.value("kind", "") != "traces")
    throw std::runtime_error("not a trace file: " + path);
  TraceFileHeader header;
  header.format_version = h.at("format_version").get<int>();
  if (header.format_version != kTraceFormatVersion)
    throw std::runtime_error("unsupported trace format_version");
  header.method = h.at("method").get<std::string>();
  header.iterations = h.at("iterations").get<int>();
  header.init_context = h.at("init_context").get<int>();
  header.seed = h.at("seed").get<std::uint64_t>();
  header.num_tasks = h.at("num_tasks").get<int>();
  header.sequence_length = h.at("sequence_length").get<int>();
  header.alpha = h.at("alpha").get<double>();
  header.problems = h.at("problems").get<std::string>();

  std::vector<Trace> traces;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto j = json::parse(lines[i]);
    const auto id = j.at("problem_id").get<std::string>();
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, traces.size()).first;
      traces.emplace_back();
      traces.back().problem_id = id;
      traces.back().method = header.method;
    }
    Trace& t = traces[it->second];
    if (j.contains("initial_best_u_bar")) {
      t.initial_best = j.at("initial_best_u_bar").get<double>();
    } else if (j.value("partial", false)) {
      t.partial = true;
      t.error = j.value("error", "");
    } else {
      TraceStep step;
      step.proposed = j.at("proposed").get<TaskSeq>();
      step.utility = j.at("utility").get<UtilityVector>();
      step.u_bar = j.at("u_bar").get<double>();
      step.best_u_bar = j.at("best_u_bar").get<double>();
      step.proposal_seconds = j.at("proposal_seconds").get<double>();
      t.steps.push_back(std::move(step));
    }
  }
  return {header, traces};
}

}  // namespace taskseq
