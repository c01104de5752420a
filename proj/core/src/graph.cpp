#include "cpcnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cpcnn/errors.hpp"

namespace cpcnn {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

double pairs(long long k) { return k < 2 ? 0.0 : static_cast<double>(k * (k - 1) / 2); }

}  // namespace

void CPGraphParams::validate() const {
  if (n < 1) throw ParameterError("n must be positive, got " + std::to_string(n));
  if (n_c < 0 || n_c > n)
    throw ParameterError("n_c must lie in [0, n], got " + std::to_string(n_c));
  if (!is_probability(p_cc) || !is_probability(p_cp) || !is_probability(p_pp))
    throw ParameterError("wiring probabilities must lie in [0, 1]");
}

Graph::Graph(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
  if (n < 0) throw ParameterError("negative node count");
  for (auto& [a, b] : edges_) {
    if (a == b) throw ParameterError("self-loop on node " + std::to_string(a));
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw ParameterError("edge endpoint out of range");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
    throw ParameterError("duplicate edge");
}

bool Graph::has_edge(int a, int b) const {
  if (a > b) std::swap(a, b);
  return std::binary_search(edges_.begin(), edges_.end(), Edge{a, b});
}

std::vector<int> Graph::degrees() const {
  std::vector<int> deg(static_cast<std::size_t>(n_), 0);
  for (const auto& [a, b] : edges_) {
    ++deg[static_cast<std::size_t>(a)];
    ++deg[static_cast<std::size_t>(b)];
  }
  return deg;
}

Graph generate_cp_graph(const CPGraphParams& params, Seed seed) {
  params.validate();
  const int n = params.n;
  const int nc = params.n_c;
  std::vector<Graph::Edge> edges;

  Rng core_core(split(seed, 1));
  for (int i = 0; i < nc; ++i)
    for (int j = i + 1; j < nc; ++j)
      if (core_core.uniform() < params.p_cc) edges.emplace_back(i, j);

  Rng core_periphery(split(seed, 2));
  for (int i = 0; i < nc; ++i)
    for (int j = nc; j < n; ++j)
      if (core_periphery.uniform() < params.p_cp) edges.emplace_back(i, j);

  Rng periphery(split(seed, 3));
  for (int i = nc; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (periphery.uniform() < params.p_pp) edges.emplace_back(i, j);

  return Graph(n, std::move(edges));
}

Graph generate_er_graph(int n, double p, Seed seed) {
  if (n < 1) throw ParameterError("n must be positive");
  if (!is_probability(p)) throw ParameterError("ER probability must lie in [0, 1]");
  Rng rng(split(seed, 0));
  std::vector<Graph::Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  return Graph(n, std::move(edges));
}

Graph generate_ws_graph(int n, int k, double p_rewire, Seed seed) {
  if (k <= 0 || k % 2 != 0) throw ParameterError("WS k must be a positive even integer");
  if (k >= n) throw ParameterError("WS k must be smaller than n");
  if (!is_probability(p_rewire)) throw ParameterError("WS rewiring probability must lie in [0, 1]");

  const auto un = static_cast<std::size_t>(n);
  std::vector<std::vector<char>> adj(un, std::vector<char>(un, 0));
  auto connect = [&](int a, int b, char v) {
    adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = v;
    adj[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = v;
  };
  for (int i = 0; i < n; ++i)
    for (int j = 1; j <= k / 2; ++j) connect(i, (i + j) % n, 1);

  Rng rng(split(seed, 0));
  std::vector<int> candidates;
  for (int j = 1; j <= k / 2; ++j) {
    for (int i = 0; i < n; ++i) {
      const int old = (i + j) % n;
      if (!adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(old)]) continue;
      if (rng.uniform() >= p_rewire) continue;
      candidates.clear();
      for (int w = 0; w < n; ++w)
        if (w != i && !adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)])
          candidates.push_back(w);
      if (candidates.empty()) continue;
      const int target = candidates[rng.below(candidates.size())];
      connect(i, old, 0);
      connect(i, target, 1);
    }
  }

  std::vector<Graph::Edge> edges;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]) edges.emplace_back(a, b);
  return Graph(n, std::move(edges));
}

BlockDensityStats block_density_stats(const Graph& g, int n_c) {
  const int n = g.node_count();
  if (n_c < 0 || n_c > n) throw ParameterError("n_c out of range for block density");
  long long cc = 0, cp = 0, pp = 0;
  for (const auto& [a, b] : g.edges()) {
    const bool ca = a < n_c, cb = b < n_c;
    if (ca && cb)
      ++cc;
    else if (ca || cb)
      ++cp;
    else
      ++pp;
  }
  auto ratio = [](long long num, double den) { return den > 0.0 ? static_cast<double>(num) / den : 0.0; };
  BlockDensityStats s;
  s.d_cc = ratio(cc, pairs(n_c));
  s.d_cp = ratio(cp, static_cast<double>(n_c) * static_cast<double>(n - n_c));
  s.d_pp = ratio(pp, pairs(n - n_c));
  s.overall = ratio(static_cast<long long>(g.edge_count()), pairs(n));
  return s;
}

MatchedDensity matched_density_params(const CPGraphParams& params) {
  params.validate();
  const int n = params.n;
  const int nc = params.n_c;
  MatchedDensity out;
  const double total = pairs(n);
  if (total > 0.0) {
    out.er_p = (pairs(nc) * params.p_cc +
                static_cast<double>(nc) * static_cast<double>(n - nc) * params.p_cp +
                pairs(n - nc) * params.p_pp) /
               total;
  }
  const double expected_degree = out.er_p * static_cast<double>(n - 1);
  int k = 2 * static_cast<int>(std::lround(expected_degree / 2.0));
  const int ceiling = std::max(2, n - 2 - (n % 2));
  out.ws_k = std::clamp(k, 2, ceiling);
  return out;
}

void write_graph(std::ostream& os, const Graph& g, int n_c) {
  os << "n " << g.node_count() << '\n' << "core " << n_c << '\n';
  for (const auto& [a, b] : g.edges()) os << "e " << a << ' ' << b << '\n';
}

std::string format_graph(const Graph& g, int n_c) {
  std::ostringstream os;
  write_graph(os, g, n_c);
  return os.str();
}

namespace {

int parse_int(const std::string& token, int line) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(token, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != token.size() || token.empty() || (token.size() > 1 && token[0] == '0') || token[0] == '+')
    throw FormatError("line " + std::to_string(line) + ": bad integer '" + token + "'");
  return v;
}

}  // namespace

ParsedGraph parse_graph(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  int n = -1;
  int nc = -1;
  std::vector<Graph::Edge> edges;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag, a, b, extra;
    ls >> tag >> a;
    if (tag == "n" && line_no == 1 && !(ls >> extra)) {
      n = parse_int(a, line_no);
    } else if (tag == "core" && line_no == 2 && !(ls >> extra)) {
      nc = parse_int(a, line_no);
    } else if (tag == "e" && line_no > 2 && (ls >> b) && !(ls >> extra)) {
      const int i = parse_int(a, line_no);
      const int j = parse_int(b, line_no);
      if (i >= j) throw FormatError("line " + std::to_string(line_no) + ": edge must satisfy i < j");
      if (!edges.empty() && !(edges.back() < Graph::Edge{i, j}))
        throw FormatError("line " + std::to_string(line_no) + ": edges not strictly sorted");
      edges.emplace_back(i, j);
    } else {
      throw FormatError("line " + std::to_string(line_no) + ": unexpected '" + line + "'");
    }
  }
  if (n < 0 || nc < 0) throw FormatError("graph text missing 'n' or 'core' header");
  if (nc > n) throw FormatError("core count exceeds node count");
  try {
    return ParsedGraph{Graph(n, std::move(edges)), nc};
  } catch (const ParameterError& e) {
    throw FormatError(e.what());
  }
}

ParsedGraph read_graph_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open graph file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_graph(ss.str());
}

}  // namespace cpcnn
