#include "qhjb/lattice.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "csv.hpp"

namespace qhjb {

Lattice::Lattice(double epsilon, int dim, double lo, double hi)
    : epsilon_(epsilon), dim_(dim), lo_(lo), hi_(hi) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("lattice pitch must be positive");
    if (dim < 1 || dim > 3) throw std::invalid_argument("lattice dimension must be 1, 2 or 3");
    if (!(hi > lo)) throw std::invalid_argument("lattice bounds must satisfy lo < hi");
    const double steps = (hi - lo) / epsilon;
    const double rounded = std::round(steps);
    if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps))
        throw std::invalid_argument("lattice pitch must divide the domain width");
    per_axis_ = static_cast<std::size_t>(rounded) + 1;
    num_cells_ = 1;
    for (int i = 0; i < dim; ++i) num_cells_ *= per_axis_;
}

Cell Lattice::encode(const Vec& x) const {
    if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("state dimension mismatch");
    std::vector<std::size_t> idx(dim_);
    for (int i = 0; i < dim_; ++i) {
        if (!(x[i] >= lo_ && x[i] <= hi_)) throw std::domain_error("state lies outside the lattice domain");
        // Halfway points round down.
        const double t = (x[i] - lo_) / epsilon_;
        const double k = std::ceil(t - 0.5 - 1e-9);
        idx[i] = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(per_axis_ - 1)));
    }
    return cell_at(idx);
}

std::vector<std::size_t> Lattice::index(Cell cell) const {
    if (cell >= num_cells_) throw std::out_of_range("cell index out of range");
    std::vector<std::size_t> idx(dim_);
    for (int i = 0; i < dim_; ++i) {
        idx[i] = cell % per_axis_;
        cell /= per_axis_;
    }
    return idx;
}

Cell Lattice::cell_at(const std::vector<std::size_t>& idx) const {
    Cell cell = 0;
    for (int i = dim_ - 1; i >= 0; --i) {
        if (idx[i] >= per_axis_) throw std::out_of_range("lattice index out of range");
        cell = cell * per_axis_ + idx[i];
    }
    return cell;
}

Vec Lattice::point(Cell cell) const {
    const auto idx = index(cell);
    Vec x(dim_);
    for (int i = 0; i < dim_; ++i) {
        // Pin the last point to hi exactly.
        x[i] = idx[i] + 1 == per_axis_ ? hi_ : lo_ + static_cast<double>(idx[i]) * epsilon_;
    }
    return x;
}

bool Lattice::is_boundary(Cell cell) const {
    const auto idx = index(cell);
    return std::any_of(idx.begin(), idx.end(), [&](std::size_t k) { return k == 0 || k + 1 == per_axis_; });
}

namespace {

std::vector<std::vector<int>> stencil_offsets(int dim) {
    // xi + a e_i + b e_j with a, b in {0, +-1}; for d = 1 only the axis moves.
    std::vector<std::vector<int>> out;
    for (int i = 0; i < dim; ++i) {
        for (int a : {-1, 1}) {
            std::vector<int> off(dim, 0);
            off[i] = a;
            out.push_back(off);
        }
    }
    for (int i = 0; i < dim; ++i) {
        for (int j = i + 1; j < dim; ++j) {
            for (int a : {-1, 1}) {
                for (int b : {-1, 1}) {
                    std::vector<int> off(dim, 0);
                    off[i] = a;
                    off[j] = b;
                    out.push_back(off);
                }
            }
        }
    }
    return out;
}

}  // namespace

std::vector<Cell> Lattice::neighbors(Cell cell) const {
    const auto idx = index(cell);
    std::vector<Cell> out;
    for (const auto& off : stencil_offsets(dim_)) {
        std::vector<std::size_t> n(dim_);
        bool inside = true;
        for (int i = 0; i < dim_ && inside; ++i) {
            const auto k = static_cast<long long>(idx[i]) + off[i];
            inside = k >= 0 && k < static_cast<long long>(per_axis_);
            n[i] = static_cast<std::size_t>(std::max(k, 0LL));
        }
        if (inside) out.push_back(cell_at(n));
    }
    return out;
}

Cell Lattice::offset_clamped(Cell cell, const std::vector<int>& offset) const {
    auto idx = index(cell);
    for (int i = 0; i < dim_; ++i) {
        const auto k = static_cast<long long>(idx[i]) + offset[i];
        idx[i] = static_cast<std::size_t>(std::clamp(k, 0LL, static_cast<long long>(per_axis_ - 1)));
    }
    return cell_at(idx);
}

LatticeModel::LatticeModel(std::size_t num_cells, int num_actions, int dim)
    : num_cells_(num_cells), num_actions_(num_actions), dim_(dim) {
    if (num_actions < 1 || dim < 1) throw std::invalid_argument("invalid model shape");
    entries_.assign(num_cells * num_actions,
                    ModelEntry{Vec(dim, 0.0), Vec(static_cast<std::size_t>(dim * dim), 0.0), 0});
}

ModelEntry& LatticeModel::at(Cell cell, int action) {
    if (cell >= num_cells_ || action < 0 || action >= num_actions_)
        throw std::out_of_range("model entry out of range");
    return entries_[cell * num_actions_ + action];
}

const ModelEntry& LatticeModel::at(Cell cell, int action) const {
    return const_cast<LatticeModel*>(this)->at(cell, action);
}

void LatticeModel::update(Cell cell, int action, const Transition& t, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("model learning rate must lie in (0, 1]");
    if (!(t.delta > 0.0)) throw std::invalid_argument("transition duration must be positive");
    ModelEntry& e = at(cell, action);
    const int d = dim_;
    Vec dx(d);
    for (int i = 0; i < d; ++i) dx[i] = t.next.x[i] - t.x.x[i];

    for (int i = 0; i < d; ++i) e.mu[i] = (1.0 - alpha) * e.mu[i] + alpha * dx[i] / t.delta;

    Vec resid(d);
    for (int i = 0; i < d; ++i) resid[i] = dx[i] - t.delta * e.mu[i];
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            e.sigma[i * d + j] = (1.0 - alpha) * e.sigma[i * d + j] + alpha * resid[i] * resid[j] / t.delta;
    ++e.visits;
}

void LatticeModel::write_csv(std::ostream& out) const {
    const int d = dim_;
    out << "cell_index,action";
    for (int i = 0; i < d; ++i) out << ",mu_hat_" << i;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out << ",sigma_hat_" << i << '_' << j;
    out << '\n';
    for (std::size_t c = 0; c < num_cells_; ++c) {
        for (int a = 0; a < num_actions_; ++a) {
            const ModelEntry& e = at(c, a);
            out << c << ',' << a;
            for (double v : e.mu) out << ',' << csv::format(v);
            for (double v : e.sigma) out << ',' << csv::format(v);
            out << '\n';
        }
    }
}

LatticeModel LatticeModel::read_csv(std::istream& in, std::size_t num_cells, int num_actions, int dim) {
    LatticeModel model(num_cells, num_actions, dim);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("model checkpoint is empty");
    const std::size_t expected = 2 + static_cast<std::size_t>(dim + dim * dim);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = csv::split(line);
        if (fields.size() != expected) throw std::runtime_error("model checkpoint row has wrong column count");
        ModelEntry& e = model.at(static_cast<Cell>(csv::parse_int(fields[0])),
                                 static_cast<int>(csv::parse_int(fields[1])));
        for (int i = 0; i < dim; ++i) e.mu[i] = csv::parse_double(fields[2 + i]);
        for (int i = 0; i < dim * dim; ++i) e.sigma[i] = csv::parse_double(fields[2 + dim + i]);
    }
    return model;
}

Stencil fd_stencil(const Vec& mu, const Vec& sigma, double epsilon) {
    const int d = static_cast<int>(mu.size());
    if (sigma.size() != static_cast<std::size_t>(d * d)) throw std::invalid_argument("covariance shape mismatch");
    auto s = [&](int i, int j) { return sigma[i * d + j]; };

    double denom = 0.0;
    for (int i = 0; i < d; ++i) denom += epsilon * std::abs(mu[i]) + s(i, i);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j) denom -= 0.5 * std::abs(s(i, j));
    if (!std::isfinite(denom) || denom <= 1e-12)
        throw DegenerateModelError("dynamics model has no drift or diffusion yet; skip this update");

    Stencil out;
    out.delta = epsilon * epsilon / denom;
    const double scale = out.delta / (2.0 * epsilon * epsilon);

    for (int i = 0; i < d; ++i) {
        double off_diag = 0.0;
        for (int j = 0; j < d; ++j)
            if (j != i) off_diag += std::abs(s(i, j));
        for (int sign : {1, -1}) {
            const double drift_part = std::max(sign * mu[i], 0.0);
            std::vector<int> off(d, 0);
            off[i] = sign;
            out.probs.push_back({off, std::max(0.0, scale * (2.0 * epsilon * drift_part + s(i, i) - off_diag))});
        }
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            const double plus = std::max(s(i, j), 0.0);
            const double minus = std::max(-s(i, j), 0.0);
            for (int sign : {1, -1}) {
                std::vector<int> same(d, 0), cross(d, 0);
                same[i] = sign;
                same[j] = sign;
                cross[i] = sign;
                cross[j] = -sign;
                out.probs.push_back({same, scale * plus});
                out.probs.push_back({cross, scale * minus});
            }
        }
    }

    double total = 0.0;
    for (const auto& p : out.probs) total += p.probability;
    if (!(total > 0.0)) throw DegenerateModelError("finite-difference kernel has no mass; skip this update");
    for (auto& p : out.probs) p.probability /= total;
    return out;
}

double TransitionKernel::probability(Cell cell) const {
    double p = 0.0;
    for (const auto& [c, w] : probs)
        if (c == cell) p += w;
    return p;
}

TransitionKernel kernel(const LatticeModel& model, const Lattice& lattice, Cell cell, int action) {
    const ModelEntry& e = model.at(cell, action);
    const Stencil st = fd_stencil(e.mu, e.sigma, lattice.epsilon());
    TransitionKernel k;
    k.delta = st.delta;
    for (const auto& p : st.probs) {
        const Cell target = lattice.offset_clamped(cell, p.offset);
        auto it = std::find_if(k.probs.begin(), k.probs.end(), [&](const auto& e2) { return e2.first == target; });
        if (it == k.probs.end())
            k.probs.emplace_back(target, p.probability);
        else
            it->second += p.probability;
    }
    return k;
}

}  // namespace qhjb
