#include "gqef/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace gqef {

Graph::Graph(int n_nodes, std::vector<Edge> edges, bool directed)
    : n_(n_nodes), edges_(std::move(edges)), directed_(directed) {
    if (n_ <= 0) throw InvalidInput("graph must have at least one node");
    std::set<std::pair<int, int>> seen;
    for (auto& e : edges_) {
        if (e.i < 0 || e.j < 0 || e.i >= n_ || e.j >= n_)
            throw InvalidInput("edge index out of range");
        if (e.i == e.j) throw InvalidInput("self-loop in edge list");
        if (!std::isfinite(e.weight)) throw InvalidInput("non-finite edge weight");
        if (!directed_ && e.i > e.j) std::swap(e.i, e.j);
        if (!seen.emplace(e.i, e.j).second) throw InvalidInput("duplicate edge in edge list");
    }
}

Matrix Graph::adjacency() const {
    Matrix a = Matrix::Zero(n_, n_);
    for (const auto& e : edges_) {
        a(e.i, e.j) = e.weight;
        if (!directed_) a(e.j, e.i) = e.weight;
    }
    return a;
}

Vector Graph::degrees() const { return adjacency().rowwise().sum(); }

bool Graph::connected() const {
    std::vector<std::vector<int>> nbr(n_);
    for (const auto& e : edges_) {
        nbr[e.i].push_back(e.j);
        nbr[e.j].push_back(e.i);
    }
    std::vector<char> seen(n_, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int u : nbr[v]) {
            if (!seen[u]) {
                seen[u] = 1;
                ++count;
                stack.push_back(u);
            }
        }
    }
    return count == n_;
}

Graph read_edge_list(std::istream& in, int n_nodes) {
    std::vector<Edge> edges;
    std::string line;
    int max_idx = -1;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        std::istringstream ls(line);
        Edge e;
        if (!(ls >> e.i)) continue;
        if (!(ls >> e.j >> e.weight))
            throw InvalidInput("edge list line " + std::to_string(lineno) + ": expected `i j weight`");
        std::string rest;
        if (ls >> rest)
            throw InvalidInput("edge list line " + std::to_string(lineno) + ": trailing tokens");
        max_idx = std::max({max_idx, e.i, e.j});
        edges.push_back(e);
    }
    const int n = n_nodes >= 0 ? n_nodes : max_idx + 1;
    if (n <= 0) throw InvalidInput("empty edge list");
    return Graph(n, std::move(edges));
}

Graph load_edge_list(const std::string& path, int n_nodes) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open edge list: " + path);
    return read_edge_list(in, n_nodes);
}

void write_edge_list(std::ostream& out, const Graph& g) {
    out << "# nodes " << g.size() << '\n';
    out.precision(17);
    for (const auto& e : g.edges()) out << e.i << ' ' << e.j << ' ' << e.weight << '\n';
}

Graph gen_sensor_graph(int n, double radius, std::uint64_t seed, int max_retries) {
    if (n < 2) throw InvalidInput("sensor graph needs n >= 2");
    if (!(radius > 0.0)) throw InvalidInput("sensor graph radius must be positive");
    Rng rng(seed);
    const double r2 = radius * radius;
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        std::vector<double> px(n), py(n);
        for (int k = 0; k < n; ++k) {
            px[k] = rng.uniform();
            py[k] = rng.uniform();
        }
        std::vector<Edge> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double dx = px[i] - px[j], dy = py[i] - py[j];
                if (dx * dx + dy * dy <= r2) edges.push_back({i, j, 1.0});
            }
        Graph g(n, std::move(edges));
        if (g.connected()) return g;
    }
    throw NumericalError("sensor graph: no connected draw within " + std::to_string(max_retries) +
                         " retries (radius too small?)");
}

const char* to_string(ShiftKind k) {
    switch (k) {
    case ShiftKind::Adjacency: return "adjacency";
    case ShiftKind::Laplacian: return "laplacian";
    case ShiftKind::NormalizedLaplacian: return "normalized_laplacian";
    case ShiftKind::Custom: return "custom";
    }
    return "?";
}

ShiftKind shift_kind_from_string(const std::string& s) {
    if (s == "adjacency") return ShiftKind::Adjacency;
    if (s == "laplacian") return ShiftKind::Laplacian;
    if (s == "normalized_laplacian") return ShiftKind::NormalizedLaplacian;
    if (s == "custom") return ShiftKind::Custom;
    throw InvalidInput("unknown shift kind: " + s);
}

namespace {

bool exactly_symmetric(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.cols(); ++j)
            if (m(i, j) != m(j, i)) return false;
    return true;
}

double radius_of(const Matrix& m, bool sym) {
    if (m.size() == 0) return 0.0;
    if (sym) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
    Eigen::EigenSolver<Matrix> es(m, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace

struct ShiftOperator::Cache {
    std::once_flag once;
    Spectrum spectrum;
    std::string error;
};

ShiftOperator::ShiftOperator(Matrix m, ShiftKind kind, std::optional<EdgeModel> edges)
    : m_(std::move(m)), kind_(kind), edges_(std::move(edges)), cache_(std::make_shared<Cache>()) {
    if (m_.rows() != m_.cols()) throw InvalidInput("shift operator must be square");
    if (!m_.allFinite()) throw InvalidInput("shift operator has non-finite entries");
    symmetric_ = exactly_symmetric(m_);
    rho_ = radius_of(m_, symmetric_);
}

ShiftOperator ShiftOperator::custom(Matrix m) {
    if (m.size() == 0) throw InvalidInput("empty shift operator");
    return ShiftOperator(std::move(m), ShiftKind::Custom, std::nullopt);
}

const Spectrum& ShiftOperator::spectrum() const {
    std::call_once(cache_->once, [this] {
        auto& sp = cache_->spectrum;
        const auto n = m_.rows();
        if (symmetric_) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(m_);
            if (es.info() != Eigen::Success) {
                cache_->error = "symmetric eigensolver failed";
                return;
            }
            sp.U = es.eigenvectors().cast<cplx>();
            sp.U_inv = es.eigenvectors().transpose().cast<cplx>();
            sp.lambda = es.eigenvalues().cast<cplx>();
            sp.real_symmetric = true;
            return;
        }
        Eigen::EigenSolver<Matrix> es(m_);
        if (es.info() != Eigen::Success) {
            cache_->error = "general eigensolver failed";
            return;
        }
        sp.U = es.eigenvectors();
        sp.lambda = es.eigenvalues();
        Eigen::PartialPivLU<CMatrix> lu(sp.U);
        sp.U_inv = lu.inverse();
        const double defect = (sp.U * sp.U_inv - CMatrix::Identity(n, n)).norm();
        const double recon = (sp.U * sp.lambda.asDiagonal() * sp.U_inv - m_.cast<cplx>()).norm();
        if (!std::isfinite(defect) || defect > 1e-9 || recon > 1e-9 * std::max(1.0, m_.norm()))
            cache_->error = "shift operator is not diagonalizable (defect " + std::to_string(defect) + ")";
    });
    if (!cache_->error.empty()) throw NumericalError(cache_->error);
    return cache_->spectrum;
}

ShiftOperator build_shift(const Graph& g, ShiftKind kind) {
    if (g.size() <= 0) throw InvalidInput("empty graph");
    const Matrix a = g.adjacency();
    EdgeModel em;
    em.n = g.size();
    em.edges = g.edges();
    switch (kind) {
    case ShiftKind::Adjacency: {
        std::optional<EdgeModel> model;
        if (!g.directed()) model = em;
        return ShiftOperator(a, kind, std::move(model));
    }
    case ShiftKind::Laplacian:
    case ShiftKind::NormalizedLaplacian: {
        if (g.directed()) throw InvalidInput("Laplacian operators need an undirected graph");
        Matrix l = -a;
        l.diagonal() = a.rowwise().sum();
        em.laplacian_form = true;
        if (kind == ShiftKind::NormalizedLaplacian) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(l, Eigen::EigenvaluesOnly);
            if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
            const double lmax = es.eigenvalues().maxCoeff();
            if (!(lmax > 0.0)) throw InvalidInput("normalized Laplacian of an edgeless graph");
            l /= lmax;
            em.scale = 1.0 / lmax;
        }
        return ShiftOperator(l, kind, em);
    }
    case ShiftKind::Custom: break;
    }
    throw InvalidInput("build_shift: kind must be adjacency, laplacian or normalized_laplacian");
}

CVector gft(const ShiftOperator& S, const Vector& x) {
    if (x.size() != S.size()) throw InvalidInput("gft: dimension mismatch");
    return S.spectrum().U_inv * x.cast<cplx>();
}

CVector inverse_gft(const ShiftOperator& S, const CVector& xhat) {
    if (xhat.size() != S.size()) throw InvalidInput("inverse_gft: dimension mismatch");
    return S.spectrum().U * xhat;
}

double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

Matrix expected_shift(const ShiftOperator& S, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("edge probability outside [0,1]");
    return p * S.matrix();
}

Matrix EdgeModel::realize(const std::vector<std::uint8_t>& mask) const {
    Matrix s = Matrix::Zero(n, n);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (!mask[e]) continue;
        const auto& ed = edges[e];
        const double w = scale * ed.weight;
        if (laplacian_form) {
            s(ed.i, ed.i) += w;
            s(ed.j, ed.j) += w;
            s(ed.i, ed.j) -= w;
            s(ed.j, ed.i) -= w;
        } else {
            s(ed.i, ed.j) += w;
            s(ed.j, ed.i) += w;
        }
    }
    return s;
}

Matrix EdgeModel::edge_term(std::size_t e) const {
    std::vector<std::uint8_t> mask(edges.size(), 0);
    mask[e] = 1;
    return realize(mask);
}

EdgeSampler::EdgeSampler(const ShiftOperator& base, double p, std::uint64_t seed)
    : model_(nullptr), p_(p), rng_(seed) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidInput("edge sampling probability must be in [0,1)");
    if (!base.edge_model()) throw InvalidInput("edge sampling needs an undirected graph-built operator");
    model_ = &*base.edge_model();
    mask_.assign(model_->edges.size(), 0);
}

const std::vector<std::uint8_t>& EdgeSampler::sample_mask() {
    for (auto& b : mask_) b = rng_.bernoulli(p_) ? 1 : 0;
    return mask_;
}

Matrix EdgeSampler::sample() { return model_->realize(sample_mask()); }

NodeSampler::NodeSampler(int n_nodes, double p, std::uint64_t seed) : n_(n_nodes), p_(p), rng_(seed) {
    if (n_nodes <= 0) throw InvalidInput("node sampler needs n >= 1");
    if (!(p > 0.0 && p <= 1.0)) throw InvalidInput("node selection probability must be in (0,1]");
    mask_.assign(n_, 0);
}

const std::vector<std::uint8_t>& NodeSampler::sample_mask() {
    for (auto& b : mask_) b = rng_.bernoulli(p_) ? 1 : 0;
    return mask_;
}

Matrix NodeSampler::sample() {
    const auto& m = sample_mask();
    Matrix P = Matrix::Zero(n_, n_);
    for (int i = 0; i < n_; ++i) P(i, i) = m[i];
    return P;
}

} // namespace gqef
