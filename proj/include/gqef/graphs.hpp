#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gqef/common.hpp"
#include "gqef/rng.hpp"

namespace gqef {

struct Edge {
    int i = 0;
    int j = 0;
    double weight = 1.0;
};

/// Node count plus an edge list. Undirected edges are stored once with i < j.
class Graph {
public:
    Graph() = default;
    Graph(int n_nodes, std::vector<Edge> edges, bool directed = false);

    int size() const noexcept { return n_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    std::size_t edge_count() const noexcept { return edges_.size(); }
    bool directed() const noexcept { return directed_; }

    /// Dense weighted adjacency; undirected edges are mirrored.
    Matrix adjacency() const;
    Vector degrees() const;
    bool connected() const;

private:
    int n_ = 0;
    std::vector<Edge> edges_;
    bool directed_ = false;
};

/// Edge-list text format: `i j weight` per line, 0-based, `#` comments.
/// Duplicates and self-loops are rejected. n_nodes < 0 infers 1 + max index.
Graph read_edge_list(std::istream& in, int n_nodes = -1);
Graph load_edge_list(const std::string& path, int n_nodes = -1);
void write_edge_list(std::ostream& out, const Graph& g);

/// Random geometric graph on the unit square, redrawn until connected.
Graph gen_sensor_graph(int n, double radius, std::uint64_t seed, int max_retries = 200);

enum class ShiftKind { Adjacency, Laplacian, NormalizedLaplacian, Custom };

const char* to_string(ShiftKind k);
ShiftKind shift_kind_from_string(const std::string& s);

/// Eigen-decomposition S = U diag(lambda) U^{-1}.
struct Spectrum {
    CMatrix U;
    CMatrix U_inv;
    CVector lambda;
    bool real_symmetric = false;
};

/// Decomposition of a graph-built operator into per-edge terms,
/// S = scale * sum_e w_e B_e with B_e = e_i e_j^T + e_j e_i^T (adjacency form)
/// or B_e = (e_i - e_j)(e_i - e_j)^T (Laplacian form). Edge masks act on it
/// linearly, which is what the random-graph expectations rely on.
struct EdgeModel {
    int n = 0;
    bool laplacian_form = false;
    double scale = 1.0;
    std::vector<Edge> edges;

    /// out = S_mask * x in O(E). mask.size() == edges.size().
    template <class Vec>
    void apply(const std::vector<std::uint8_t>& mask, const Vec& x, Vec& out) const;

    Matrix realize(const std::vector<std::uint8_t>& mask) const;
    /// Dense matrix of a single edge term (scale and weight included).
    Matrix edge_term(std::size_t e) const;
};

class ShiftOperator {
public:
    ShiftOperator() = default;

    /// Wraps an arbitrary square matrix (kind Custom).
    static ShiftOperator custom(Matrix m);

    const Matrix& matrix() const noexcept { return m_; }
    ShiftKind kind() const noexcept { return kind_; }
    int size() const noexcept { return static_cast<int>(m_.rows()); }
    double spectral_radius() const noexcept { return rho_; }
    bool symmetric() const noexcept { return symmetric_; }
    const std::optional<EdgeModel>& edge_model() const noexcept { return edges_; }

    /// Lazily computed and cached; thread-safe. Throws NumericalError when the
    /// operator is not diagonalizable.
    const Spectrum& spectrum() const;

private:
    friend ShiftOperator build_shift(const Graph&, ShiftKind);
    ShiftOperator(Matrix m, ShiftKind kind, std::optional<EdgeModel> edges);

    struct Cache;
    Matrix m_;
    ShiftKind kind_ = ShiftKind::Custom;
    double rho_ = 0.0;
    bool symmetric_ = false;
    std::optional<EdgeModel> edges_;
    std::shared_ptr<Cache> cache_;
};

/// NormalizedLaplacian = L / lambda_max(L).
ShiftOperator build_shift(const Graph& g, ShiftKind kind);

CVector gft(const ShiftOperator& S, const Vector& x);
CVector inverse_gft(const ShiftOperator& S, const CVector& xhat);

/// Spectral norm (largest singular value).
double spectral_norm(const Matrix& m);

/// E[S_t] under i.i.d. Bernoulli(p) edge retention: p * S for both the
/// adjacency and Laplacian forms (E[diag(A_t 1)] = p diag(A 1)).
Matrix expected_shift(const ShiftOperator& S, double p);

class EdgeSampler {
public:
    EdgeSampler(const ShiftOperator& base, double p, std::uint64_t seed);

    /// Draws one Bernoulli mask over the undirected edges.
    const std::vector<std::uint8_t>& sample_mask();
    /// Draws a dense realization S_t.
    Matrix sample();

    const EdgeModel& model() const noexcept { return *model_; }
    double p() const noexcept { return p_; }

private:
    const EdgeModel* model_;
    double p_;
    Rng rng_;
    std::vector<std::uint8_t> mask_;
};

class NodeSampler {
public:
    NodeSampler(int n_nodes, double p, std::uint64_t seed);

    /// Draws the diagonal of P_T as 0/1 flags.
    const std::vector<std::uint8_t>& sample_mask();
    Matrix sample();

    double p() const noexcept { return p_; }

private:
    int n_;
    double p_;
    Rng rng_;
    std::vector<std::uint8_t> mask_;
};

template <class Vec>
void EdgeModel::apply(const std::vector<std::uint8_t>& mask, const Vec& x, Vec& out) const {
    out.setZero(n);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (!mask[e]) continue;
        const auto& ed = edges[e];
        const double w = scale * ed.weight;
        if (laplacian_form) {
            const auto d = w * (x[ed.i] - x[ed.j]);
            out[ed.i] += d;
            out[ed.j] -= d;
        } else {
            out[ed.i] += w * x[ed.j];
            out[ed.j] += w * x[ed.i];
        }
    }
}

} // namespace gqef
