#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mfe::detail {

/// Square matrix with two sub- and two super-diagonals, solved by Gaussian
/// elimination without pivoting. Only valid for strictly row diagonally
/// dominant systems, where elimination is stable.
class PentaBandedMatrix {
public:
    static constexpr int kHalfWidth = 2;

    explicit PentaBandedMatrix(std::size_t size) : bands_(size) {}

    std::size_t size() const { return bands_.size(); }

    /// Adds value at (row, row + offset), |offset| <= 2.
    void add(std::size_t row, int offset, double value) { bands_[row][static_cast<std::size_t>(offset + kHalfWidth)] += value; }

    /// Solves A x = rhs in place. Destroys the matrix.
    void solve_in_place(std::span<double> rhs) {
        const std::size_t n = bands_.size();
        if (rhs.size() != n) throw std::invalid_argument("banded solve: size mismatch");
        // Forward elimination. Row i is stored as entries (i, i-2 .. i+2).
        for (std::size_t k = 0; k < n; ++k) {
            const double pivot = bands_[k][kHalfWidth];
            if (pivot == 0.0) throw std::runtime_error("banded solve: zero pivot");
            for (int d = 1; d <= kHalfWidth && k + static_cast<std::size_t>(d) < n; ++d) {
                const std::size_t i = k + static_cast<std::size_t>(d);
                auto& row = bands_[i];
                const double factor = row[static_cast<std::size_t>(kHalfWidth - d)] / pivot;
                if (factor == 0.0) continue;
                row[static_cast<std::size_t>(kHalfWidth - d)] = 0.0;
                for (int e = 1; e <= kHalfWidth; ++e) {
                    // (k, k+e) lands at column offset e - d in row i.
                    row[static_cast<std::size_t>(kHalfWidth + e - d)] -= factor * bands_[k][static_cast<std::size_t>(kHalfWidth + e)];
                }
                rhs[i] -= factor * rhs[k];
            }
        }
        for (std::size_t k = n; k-- > 0;) {
            double acc = rhs[k];
            for (int e = 1; e <= kHalfWidth && k + static_cast<std::size_t>(e) < n; ++e)
                acc -= bands_[k][static_cast<std::size_t>(kHalfWidth + e)] * rhs[k + static_cast<std::size_t>(e)];
            rhs[k] = acc / bands_[k][kHalfWidth];
        }
    }

private:
    std::vector<std::array<double, 2 * kHalfWidth + 1>> bands_;
};

}  // namespace mfe::detail
