#pragma once

#include <cstddef>
#include <future>
#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace sketchmesh {

/// Compressed column storage; entries are sorted and deduplicated by construction.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;
/// Dense right-hand sides / solutions, one column per component (x, y, z, ...).
using DenseColumns = Eigen::MatrixXd;

/// Builds a sparse matrix from (row, col, value) triplets. Duplicates are summed,
/// and entries with magnitude below 1e-15 are dropped afterwards.
SparseMatrix make_sparse(std::size_t rows, std::size_t cols, const std::vector<Triplet>& entries);

/// Stacks blocks vertically; every block must have the same column count.
SparseMatrix vstack(const std::vector<const SparseMatrix*>& blocks);

struct SolverOptions {
    /// Diagonal shift, relative to trace(AᵀA)/n, applied before factorizing.
    double regularization = 1e-9;
    /// Refinement sweeps against the unshifted normal equations.
    int refinement_steps = 3;
};

/// Reusable decomposition of the regularized normal matrix AᵀA + εI.
///
/// Uses a simplicial LDLᵀ with a fixed AMD fill-reducing ordering, so the same
/// (A, b) always produces the same bits on one platform. Immutable once built
/// and safe to share between threads.
class Factorization {
public:
    Factorization() = default;

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool valid() const { return impl_ != nullptr; }

    /// Minimizes ‖A x − b‖² for each column of b.
    DenseColumns solve(const DenseColumns& b) const;

private:
    friend Factorization factorize(const SparseMatrix& a, const SolverOptions& options);
    struct Impl;
    std::shared_ptr<const Impl> impl_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
};

/// Throws SolverError when A has fewer rows than columns or when AᵀA stays
/// singular after regularization (the message carries the estimated null-space
/// dimension).
Factorization factorize(const SparseMatrix& a, const SolverOptions& options = {});

DenseColumns solve_with(const Factorization& f, const DenseColumns& b);

DenseColumns least_squares(const SparseMatrix& a, const DenseColumns& b,
                           const SolverOptions& options = {});

/// Completion handle for a factorization computed on a background thread.
class PendingFactorization {
public:
    PendingFactorization() = default;
    explicit PendingFactorization(std::shared_future<Factorization> future)
        : future_(std::move(future)) {}

    bool valid() const { return future_.valid(); }
    bool ready() const;
    /// Blocks until the factorization is available; rethrows factorization errors.
    const Factorization& get() const { return future_.get(); }

private:
    std::shared_future<Factorization> future_;
};

PendingFactorization factorize_async(SparseMatrix a, const SolverOptions& options = {});

}  // namespace sketchmesh
