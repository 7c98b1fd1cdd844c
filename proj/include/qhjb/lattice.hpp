#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qhjb/env.hpp"

namespace qhjb {

using Cell = std::size_t;

/// Regular grid of pitch epsilon over the box [lo, hi]^d. Cells are indexed
/// with axis 0 varying fastest.
class Lattice {
public:
    Lattice(double epsilon, int dim = 1, double lo = 0.0, double hi = 1.0);

    double epsilon() const { return epsilon_; }
    int dim() const { return dim_; }
    std::size_t points_per_axis() const { return per_axis_; }
    std::size_t num_cells() const { return num_cells_; }

    /// Nearest lattice point; ties go to the smaller index.
    Cell encode(const Vec& x) const;
    Cell encode(double x) const { return encode(Vec{x}); }

    Vec point(Cell cell) const;
    std::vector<std::size_t> index(Cell cell) const;
    Cell cell_at(const std::vector<std::size_t>& index) const;

    /// True when the cell lies on the domain boundary.
    bool is_boundary(Cell cell) const;

    /// Lattice points xi + a e_i + b e_j (a, b in {0, +-1}) inside the domain,
    /// excluding xi itself.
    std::vector<Cell> neighbors(Cell cell) const;

    /// Applies an integer offset and clamps every coordinate into the grid.
    Cell offset_clamped(Cell cell, const std::vector<int>& offset) const;

private:
    double epsilon_;
    int dim_;
    double lo_;
    double hi_;
    std::size_t per_axis_;
    std::size_t num_cells_;
};

/// Running drift and covariance-rate estimate for one (cell, action).
struct ModelEntry {
    Vec mu;     // state / second
    Vec sigma;  // row-major d x d, state^2 / second
    std::size_t visits = 0;
};

class LatticeModel {
public:
    LatticeModel(std::size_t num_cells, int num_actions, int dim);

    int dim() const { return dim_; }
    int num_actions() const { return num_actions_; }
    std::size_t num_cells() const { return num_cells_; }

    ModelEntry& at(Cell cell, int action);
    const ModelEntry& at(Cell cell, int action) const;

    /// Exponential moving average of drift, then of the covariance rate using
    /// the residual against the freshly updated drift.
    void update(Cell cell, int action, const Transition& t, double alpha);

    void write_csv(std::ostream& out) const;
    static LatticeModel read_csv(std::istream& in, std::size_t num_cells, int num_actions, int dim);

private:
    std::size_t num_cells_;
    int num_actions_;
    int dim_;
    std::vector<ModelEntry> entries_;
};

/// Raised when the model has neither drift nor diffusion; callers skip the update.
class DegenerateModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StencilProbability {
    std::vector<int> offset;
    double probability = 0.0;
};

struct Stencil {
    double delta = 0.0;  // seconds
    std::vector<StencilProbability> probs;
};

/// Markov-chain approximation of the diffusion on the stencil around a cell.
Stencil fd_stencil(const Vec& mu, const Vec& sigma, double epsilon);

struct TransitionKernel {
    double delta = 0.0;  // seconds
    std::vector<std::pair<Cell, double>> probs;

    double probability(Cell cell) const;
};

/// Kernel over lattice cells. Stencil points outside the domain are clamped
/// onto it, so boundary cells may send mass to themselves.
TransitionKernel kernel(const LatticeModel& model, const Lattice& lattice, Cell cell, int action);

}  // namespace qhjb
