#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "focuspar/focuspar.hpp"

namespace testutil {

using focuspar::Matrix;
using focuspar::Tape;
using focuspar::Var;

inline Matrix<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix<double> m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = u(rng);
    return m;
}

using OpFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Largest relative error between tape gradients and central differences of
/// f(x) = Σ R ⊙ op(x) over every coordinate of every input.
inline double op_grad_error(const OpFn& op, std::vector<Matrix<double>> inputs, std::uint64_t seed = 3,
                            double h = 1e-5) {
    std::mt19937_64 rng(seed);
    Matrix<double> weights;
    std::vector<Matrix<double>> analytic;
    {
        Tape<double> tp;
        std::vector<Var<double>> vs;
        for (const auto& x : inputs) vs.push_back(tp.input(x));
        Var<double> out = op(tp, vs);
        weights = random_matrix(out.rows(), out.cols(), rng);
        tp.backward({{out, weights}});
        for (auto& v : vs) analytic.push_back(tp.has_grad(v) ? tp.grad(v) : Matrix<double>(v.rows(), v.cols()));
    }
    auto eval = [&] {
        Tape<double> tp(false);
        std::vector<Var<double>> vs;
        for (const auto& x : inputs) vs.push_back(tp.constant(x));
        const auto& out = op(tp, vs).value();
        double s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
        return s;
    };
    double worst = 0;
    for (std::size_t a = 0; a < inputs.size(); ++a)
        for (std::size_t k = 0; k < inputs[a].size(); ++k) {
            const double orig = inputs[a][k];
            inputs[a][k] = orig + h;
            const double up = eval();
            inputs[a][k] = orig - h;
            const double down = eval();
            inputs[a][k] = orig;
            const double num = (up - down) / (2 * h);
            worst = std::max(worst, focuspar::grad_relative_error(analytic[a][k], num, 1e-7));
        }
    return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("focuspar_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline focuspar::AttributeSchema default_schema() {
    return focuspar::build_schema(focuspar::default_schema_config());
}

}  // namespace testutil
