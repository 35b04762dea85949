#include "fedsim/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
    throw ConfigError("parse error at line " + std::to_string(line) + ": " + msg);
}

std::uint64_t to_count(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-')
            throw ConfigError(key + " must be nonnegative");
        const std::uint64_t n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer for " + key + ": '" + v + "'");
    }
}

double to_real(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for " + key + ": '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

template <typename T>
std::vector<T> to_list(const std::string& v, const std::string& key) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("empty list entry in " + key);
        out.push_back(static_cast<T>(to_count(item, key)));
    }
    if (out.empty()) throw ConfigError("empty grid axis " + key);
    return out;
}

}  // namespace

void ExperimentSpec::validate() const {
    if (name.empty() ||
        name.find_first_of(std::string("/\\ \t\0", 5)) != std::string::npos)
        throw ConfigError("name must be a valid path segment");
    run.validate();
    if (mode == ExperimentMode::lemma1) {
        if (run.staleness != StalenessMode::synthetic)
            throw ConfigError("lemma1 mode requires staleness = synthetic");
        if (replicates < 1) throw ConfigError("replicates must be >= 1");
        if (t_max < 1) throw ConfigError("t_max must be >= 1");
    }
    if (mode == ExperimentMode::theorem) {
        if (grid_n.empty() || grid_t.empty())
            throw ConfigError("theorem mode requires grid.N and grid.T");
        if (run.model.kind != LossKind::quadratic || !(run.model.lambda > 0.0))
            throw ConfigError("theorem mode requires model = quadratic with lambda > 0");
    }
    if (mode == ExperimentMode::sweep) {
        if (grid_n.empty() && grid_t.empty() && grid_h.empty() && grid_seed.empty())
            throw ConfigError("sweep mode requires at least one grid axis");
    }
    for (std::size_t n : grid_n) {
        if (n < 1 || n > run.num_clients)
            throw ConfigError("grid.N entries must satisfy 1 <= N <= K");
    }
    for (std::size_t t : grid_t)
        if (t < 1) throw ConfigError("grid.T entries must be >= 1");
    for (std::size_t h : grid_h)
        if (h < 1) throw ConfigError("grid.H entries must be >= 1");
    if (seeds < 1) throw ConfigError("seeds must be >= 1");
    if (!(tv_threshold > 0.0)) throw ConfigError("tv_threshold must be > 0");
    if (!(grad_threshold > 0.0)) throw ConfigError("grad_threshold must be > 0");
}

ExperimentSpec parse_spec(const std::string& text) {
    ExperimentSpec spec;
    std::set<std::string> seen;
    bool eta_given = false;

    std::stringstream ss(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(ss, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) parse_fail(lineno, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) parse_fail(lineno, "missing key");
        if (value.empty()) parse_fail(lineno, "missing value for '" + key + "'");
        if (!seen.insert(key).second) parse_fail(lineno, "duplicate key '" + key + "'");

        if (key == "name") {
            spec.name = value;
        } else if (key == "mode") {
            if (value == "train") spec.mode = ExperimentMode::train;
            else if (value == "staleness") spec.mode = ExperimentMode::staleness;
            else if (value == "lemma1") spec.mode = ExperimentMode::lemma1;
            else if (value == "theorem") spec.mode = ExperimentMode::theorem;
            else if (value == "sweep") spec.mode = ExperimentMode::sweep;
            else parse_fail(lineno, "unknown mode '" + value + "'");
        } else if (key == "model") {
            if (value == "quadratic") spec.run.model.kind = LossKind::quadratic;
            else if (value == "logistic") spec.run.model.kind = LossKind::logistic;
            else parse_fail(lineno, "unknown model '" + value + "'");
        } else if (key == "K") {
            spec.run.num_clients = to_count(value, key);
        } else if (key == "N") {
            spec.run.per_round = to_count(value, key);
        } else if (key == "H") {
            spec.run.local_steps = to_count(value, key);
        } else if (key == "T") {
            spec.run.rounds = to_count(value, key);
        } else if (key == "d") {
            spec.run.dim = to_count(value, key);
        } else if (key == "n_per_client") {
            spec.run.n_per_client = to_count(value, key);
        } else if (key == "lambda") {
            spec.run.model.lambda = to_real(value, key);
            if (spec.run.model.lambda < 0.0)
                parse_fail(lineno, "lambda must be >= 0");
        } else if (key == "noise_std") {
            spec.run.noise_std = to_real(value, key);
        } else if (key == "partition") {
            if (value == "iid") spec.run.partition = Partition::iid;
            else if (value == "label_skew") spec.run.partition = Partition::label_skew;
            else parse_fail(lineno, "unknown partition '" + value + "'");
        } else if (key == "staleness") {
            if (value == "emergent") spec.run.staleness = StalenessMode::emergent;
            else if (value == "synthetic") spec.run.staleness = StalenessMode::synthetic;
            else parse_fail(lineno, "unknown staleness mode '" + value + "'");
        } else if (key == "eta_rule") {
            if (value == "theorem") spec.run.eta_rule = EtaRule::theorem;
            else if (value == "fixed") spec.run.eta_rule = EtaRule::fixed;
            else parse_fail(lineno, "unknown eta_rule '" + value + "'");
        } else if (key == "eta") {
            spec.run.eta = to_real(value, key);
            eta_given = true;
        } else if (key == "seed") {
            spec.run.seed = to_count(value, key);
        } else if (key == "seeds") {
            spec.seeds = to_count(value, key);
        } else if (key == "warm_start") {
            spec.run.warm_start = to_bool(value, key);
        } else if (key == "history_window") {
            spec.run.history_window = to_count(value, key);
        } else if (key == "replicates") {
            spec.replicates = to_count(value, key);
        } else if (key == "t_max") {
            spec.t_max = to_count(value, key);
        } else if (key == "tv_threshold") {
            spec.tv_threshold = to_real(value, key);
        } else if (key == "tv_truncate") {
            spec.tv_truncate = to_count(value, key);
        } else if (key == "grad_threshold") {
            spec.grad_threshold = to_real(value, key);
        } else if (key == "grid.N") {
            spec.grid_n = to_list<std::size_t>(value, key);
        } else if (key == "grid.T") {
            spec.grid_t = to_list<std::size_t>(value, key);
        } else if (key == "grid.H") {
            spec.grid_h = to_list<std::size_t>(value, key);
        } else if (key == "grid.seed") {
            spec.grid_seed = to_list<std::uint64_t>(value, key);
        } else {
            parse_fail(lineno, "unknown key '" + key + "'");
        }
    }

    if (spec.run.eta_rule == EtaRule::fixed && !eta_given)
        throw ConfigError("eta_rule = fixed requires an eta value");
    spec.validate();
    return spec;
}

ExperimentSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open spec file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

namespace {
std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(xs[i]);
    }
    return out;
}
}  // namespace

std::string canonical_spec(const ExperimentSpec& spec) {
    static const char* mode_names[] = {"train", "staleness", "lemma1", "theorem", "sweep"};
    std::ostringstream os;
    os << "name = " << spec.name << '\n'
       << "mode = " << mode_names[static_cast<int>(spec.mode)] << '\n'
       << "model = "
       << (spec.run.model.kind == LossKind::quadratic ? "quadratic" : "logistic") << '\n'
       << "K = " << spec.run.num_clients << '\n'
       << "N = " << spec.run.per_round << '\n'
       << "H = " << spec.run.local_steps << '\n'
       << "T = " << spec.run.rounds << '\n'
       << "d = " << spec.run.dim << '\n'
       << "n_per_client = " << spec.run.n_per_client << '\n'
       << "lambda = " << fmt_real(spec.run.model.lambda) << '\n'
       << "noise_std = " << fmt_real(spec.run.noise_std) << '\n'
       << "partition = "
       << (spec.run.partition == Partition::iid ? "iid" : "label_skew") << '\n'
       << "staleness = "
       << (spec.run.staleness == StalenessMode::emergent ? "emergent" : "synthetic")
       << '\n'
       << "eta_rule = "
       << (spec.run.eta_rule == EtaRule::theorem ? "theorem" : "fixed") << '\n'
       << "eta = " << fmt_real(spec.run.eta) << '\n'
       << "seed = " << spec.run.seed << '\n'
       << "seeds = " << spec.seeds << '\n'
       << "warm_start = " << (spec.run.warm_start ? "true" : "false") << '\n'
       << "history_window = " << spec.run.history_window << '\n'
       << "replicates = " << spec.replicates << '\n'
       << "t_max = " << spec.t_max << '\n'
       << "tv_threshold = " << fmt_real(spec.tv_threshold) << '\n'
       << "tv_truncate = " << spec.tv_truncate << '\n'
       << "grad_threshold = " << fmt_real(spec.grad_threshold) << '\n'
       << "grid.N = " << fmt_list(spec.grid_n) << '\n'
       << "grid.T = " << fmt_list(spec.grid_t) << '\n'
       << "grid.H = " << fmt_list(spec.grid_h) << '\n'
       << "grid.seed = " << fmt_list(spec.grid_seed) << '\n';
    return os.str();
}

std::string spec_hash(const ExperimentSpec& spec) {
    const std::string canon = canonical_spec(spec);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fedsim
