#include "sketchmesh/linsolve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include "sketchmesh/error.hpp"

namespace sketchmesh {

namespace {

using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

// Pivots of the unshifted LDLᵀ below this fraction of the largest pivot are
// treated as null-space directions.
constexpr double kNullPivotTolerance = 1e-10;

}  // namespace

struct Factorization::Impl {
    SparseMatrix at;      // Aᵀ
    SparseMatrix normal;  // AᵀA, unshifted
    Ldlt ldlt;            // factors AᵀA + εI
    int refinement_steps = 0;
};

SparseMatrix make_sparse(std::size_t rows, std::size_t cols, const std::vector<Triplet>& entries) {
    SparseMatrix m(static_cast<int>(rows), static_cast<int>(cols));
    m.setFromTriplets(entries.begin(), entries.end());
    m.prune([](int, int, double v) { return std::abs(v) >= 1e-15; });
    m.makeCompressed();
    return m;
}

SparseMatrix vstack(const std::vector<const SparseMatrix*>& blocks) {
    if (blocks.empty()) return {};
    const auto cols = blocks.front()->cols();
    std::size_t rows = 0;
    std::size_t nnz = 0;
    for (const auto* b : blocks) {
        if (b->cols() != cols) throw SolverError("vstack: column count mismatch");
        rows += static_cast<std::size_t>(b->rows());
        nnz += static_cast<std::size_t>(b->nonZeros());
    }
    std::vector<Triplet> entries;
    entries.reserve(nnz);
    int offset = 0;
    for (const auto* b : blocks) {
        for (int k = 0; k < b->outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(*b, k); it; ++it) {
                entries.emplace_back(offset + it.row(), it.col(), it.value());
            }
        }
        offset += static_cast<int>(b->rows());
    }
    return make_sparse(rows, static_cast<std::size_t>(cols), entries);
}

Factorization factorize(const SparseMatrix& a, const SolverOptions& options) {
    if (a.cols() == 0) throw SolverError("factorize: system has no unknowns");
    if (a.rows() < a.cols()) {
        std::ostringstream msg;
        msg << "factorize: underdetermined system (" << a.rows() << " rows < " << a.cols()
            << " columns)";
        throw SolverError(msg.str());
    }

    auto impl = std::make_shared<Factorization::Impl>();
    impl->at = a.transpose();
    impl->normal = SparseMatrix(impl->at * a);
    impl->normal.makeCompressed();
    impl->refinement_steps = options.refinement_steps;

    const auto n = impl->normal.rows();
    const double trace = impl->normal.diagonal().sum();
    const double shift = options.regularization * trace / static_cast<double>(n);

    impl->ldlt.analyzePattern(impl->normal);

    // Rank check on the unshifted matrix; the shifted factors cannot tell a true
    // null space from merely small eigenvalues.
    impl->ldlt.setShift(0.0);
    impl->ldlt.factorize(impl->normal);
    {
        const Eigen::VectorXd d = impl->ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        const auto null_dim = std::count_if(d.data(), d.data() + d.size(), [&](double p) {
            return !(p > kNullPivotTolerance * dmax);
        });
        if (impl->ldlt.info() != Eigen::Success || null_dim > 0 || !(dmax > 0.0)) {
            std::ostringstream msg;
            msg << "factorize: rank-deficient system, estimated null-space dimension "
                << std::max<std::ptrdiff_t>(null_dim, 1);
            throw SolverError(msg.str());
        }
    }

    impl->ldlt.setShift(shift);
    impl->ldlt.factorize(impl->normal);
    if (impl->ldlt.info() != Eigen::Success) {
        throw SolverError("factorize: numerical failure in regularized decomposition");
    }

    Factorization f;
    f.rows_ = static_cast<std::size_t>(a.rows());
    f.cols_ = static_cast<std::size_t>(a.cols());
    f.impl_ = std::move(impl);
    return f;
}

DenseColumns Factorization::solve(const DenseColumns& b) const {
    if (!impl_) throw SolverError("solve: empty factorization");
    if (static_cast<std::size_t>(b.rows()) != rows_) {
        std::ostringstream msg;
        msg << "solve: right-hand side has " << b.rows() << " rows, system expects " << rows_;
        throw SolverError(msg.str());
    }
    const DenseColumns rhs = impl_->at * b;
    DenseColumns x = impl_->ldlt.solve(rhs);
    // Iterative refinement removes the bias introduced by the diagonal shift.
    for (int step = 0; step < impl_->refinement_steps; ++step) {
        const DenseColumns r = rhs - impl_->normal * x;
        x += impl_->ldlt.solve(r);
    }
    return x;
}

DenseColumns solve_with(const Factorization& f, const DenseColumns& b) { return f.solve(b); }

DenseColumns least_squares(const SparseMatrix& a, const DenseColumns& b,
                           const SolverOptions& options) {
    if (static_cast<std::size_t>(b.rows()) != static_cast<std::size_t>(a.rows())) {
        std::ostringstream msg;
        msg << "least_squares: right-hand side has " << b.rows() << " rows, matrix has " << a.rows();
        throw SolverError(msg.str());
    }
    return factorize(a, options).solve(b);
}

bool PendingFactorization::ready() const {
    return future_.valid() &&
           future_.wait_for(std::chrono::seconds(0)) == std::future_status::ready;
}

PendingFactorization factorize_async(SparseMatrix a, const SolverOptions& options) {
    auto future = std::async(std::launch::async, [a = std::move(a), options]() {
                      return factorize(a, options);
                  }).share();
    return PendingFactorization(std::move(future));
}

}  // namespace sketchmesh
