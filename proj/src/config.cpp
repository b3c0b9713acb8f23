#include "taskseq/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace taskseq {

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.num_tasks = prior.num_tasks;
  m.seq_len = prior.sequence_length;
  return m;
}

RunConfig default_run_config() { return RunConfig{}; }

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: invalid integer for " + key + ": '" + v + "'");
  }
  if (pos != v.size())
    throw std::invalid_argument("config: invalid integer for " + key + ": '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: invalid number for " + key + ": '" + v + "'");
  }
  if (pos != v.size())
    throw std::invalid_argument("config: invalid number for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: invalid boolean for " + key + ": '" + v + "'");
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);

  RunConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: malformed section at line " +
                                    std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      if (section != "prior" && section != "utility" && section != "model" &&
          section != "train" && section != "eval" && section != "data")
        throw std::invalid_argument("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " +
                                  std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "prior.num_tasks") cfg.prior.num_tasks = static_cast<int>(parse_int(qual, value));
    else if (qual == "prior.sequence_length") cfg.prior.sequence_length = static_cast<int>(parse_int(qual, value));
    else if (qual == "prior.k_max") cfg.prior.k_max = static_cast<int>(parse_int(qual, value));
    else if (qual == "prior.optimal_set_cap") cfg.prior.optimal_set_cap = static_cast<int>(parse_int(qual, value));
    else if (qual == "utility.alpha") cfg.alpha = parse_real(qual, value);
    else if (qual == "model.d_emb") cfg.model.d_emb = static_cast<int>(parse_int(qual, value));
    else if (qual == "model.num_blocks") cfg.model.num_blocks = static_cast<int>(parse_int(qual, value));
    else if (qual == "model.num_heads") cfg.model.num_heads = static_cast<int>(parse_int(qual, value));
    else if (qual == "model.hidden") cfg.model.hidden = static_cast<int>(parse_int(qual, value));
    else if (qual == "model.dropout") cfg.model.dropout = parse_real(qual, value);
    else if (qual == "model.temperature") cfg.model.temperature = parse_real(qual, value);
    else if (qual == "train.steps") cfg.train.steps = static_cast<int>(parse_int(qual, value));
    else if (qual == "train.batch_size") cfg.train.batch_size = static_cast<int>(parse_int(qual, value));
    else if (qual == "train.lr") cfg.train.lr = parse_real(qual, value);
    else if (qual == "train.warmup_steps") cfg.train.warmup_steps = static_cast<int>(parse_int(qual, value));
    else if (qual == "train.weight_decay") cfg.train.weight_decay = parse_real(qual, value);
    else if (qual == "train.c_min") cfg.train.c_min = static_cast<int>(parse_int(qual, value));
    else if (qual == "train.c_max") cfg.train.c_max = static_cast<int>(parse_int(qual, value));
    else if (qual == "train.min_over_optimal_cap") cfg.train.min_over_optimal_cap = static_cast<int>(parse_int(qual, value));
    else if (qual == "train.seed") cfg.train.seed = static_cast<std::uint64_t>(parse_int(qual, value));
    else if (qual == "train.checkpoint_every") cfg.train.checkpoint_every = static_cast<int>(parse_int(qual, value));
    else if (qual == "eval.iterations") cfg.eval.iterations = static_cast<int>(parse_int(qual, value));
    else if (qual == "eval.init_context") cfg.eval.init_context = static_cast<int>(parse_int(qual, value));
    else if (qual == "eval.methods") cfg.eval.methods = value;
    else if (qual == "eval.temperature") cfg.eval.temperature = parse_real(qual, value);
    else if (qual == "eval.greedy") cfg.eval.greedy = parse_bool(qual, value);
    else if (qual == "eval.context_cap") cfg.eval.context_cap = static_cast<int>(parse_int(qual, value));
    else if (qual == "data.random_per_problem") cfg.data.random_per_problem = static_cast<int>(parse_int(qual, value));
    else if (qual == "data.mutated_per_problem") cfg.data.mutated_per_problem = static_cast<int>(parse_int(qual, value));
    else
      throw std::invalid_argument("config: unknown key '" + key + "' in section [" +
                                  section + "]");
  }
  cfg.train.alpha = cfg.alpha;
  return cfg;
}

std::string show_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[prior]\n";
  out << "num_tasks = " << cfg.prior.num_tasks << "\n";
  out << "sequence_length = " << cfg.prior.sequence_length << "\n";
  out << "k_max = " << cfg.prior.k_max << "\n";
  out << "optimal_set_cap = " << cfg.prior.optimal_set_cap << "\n";
  out << "\n[utility]\n";
  out << "alpha = " << fmt_real(cfg.alpha) << "\n";
  out << "\n[model]\n";
  out << "d_emb = " << cfg.model.d_emb << "\n";
  out << "num_blocks = " << cfg.model.num_blocks << "\n";
  out << "num_heads = " << cfg.model.num_heads << "\n";
  out << "hidden = " << cfg.model.hidden << "\n";
  out << "dropout = " << fmt_real(cfg.model.dropout) << "\n";
  out << "temperature = " << fmt_real(cfg.model.temperature) << "\n";
  out << "\n[train]\n";
  out << "steps = " << cfg.train.steps << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "lr = " << fmt_real(cfg.train.lr) << "\n";
  out << "warmup_steps = " << cfg.train.warmup_steps << "\n";
  out << "weight_decay = " << fmt_real(cfg.train.weight_decay) << "\n";
  out << "c_min = " << cfg.train.c_min << "\n";
  out << "c_max = " << cfg.train.c_max << "\n";
  out << "min_over_optimal_cap = " << cfg.train.min_over_optimal_cap << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "checkpoint_every = " << cfg.train.checkpoint_every << "\n";
  out << "\n[eval]\n";
  out << "iterations = " << cfg.eval.iterations << "\n";
  out << "init_context = " << cfg.eval.init_context << "\n";
  out << "methods = " << cfg.eval.methods << "\n";
  out << "temperature = " << fmt_real(cfg.eval.temperature) << "\n";
  out << "greedy = " << (cfg.eval.greedy ? "true" : "false") << "\n";
  out << "context_cap = " << cfg.eval.context_cap << "\n";
  out << "\n[data]\n";
  out << "random_per_problem = " << cfg.data.random_per_problem << "\n";
  out << "mutated_per_problem = " << cfg.data.mutated_per_problem << "\n";
  return out.str();
}

}  // namespace taskseq
