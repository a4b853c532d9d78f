#include <catch2/catch.hpp>

#include <functional>
#include <random>

#include "icth/tape.hpp"

using icth::nn::Mat;
using icth::nn::Tape;

namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Mat m(r, c);
    for (double& x : m.a) x = unif(rng);
    return m;
}

// FD-checks d(scalar)/d(every leaf entry) against the tape's backward pass.
void check_gradients(const std::vector<Mat>& leaves,
                     const std::function<int(Tape&, const std::vector<int>&)>& build, double tol = 2e-6) {
    auto eval = [&](const std::vector<Mat>& ls) {
        Tape tape;
        std::vector<int> ids;
        for (const auto& m : ls) ids.push_back(tape.leaf(m));
        return tape.val(build(tape, ids)).a[0];
    };

    Tape tape;
    std::vector<int> ids;
    for (const auto& m : leaves) ids.push_back(tape.leaf(m));
    int root = build(tape, ids);
    tape.backward(root);

    const double h = 1e-5;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        for (std::size_t e = 0; e < leaves[li].size(); ++e) {
            std::vector<Mat> up = leaves, dn = leaves;
            up[li].a[e] += h;
            dn[li].a[e] -= h;
            double fd = (eval(up) - eval(dn)) / (2 * h);
            double an = tape.has_grad(ids[li]) ? tape.grad(ids[li]).a[e] : 0.0;
            INFO("leaf " << li << " entry " << e << " fd " << fd << " an " << an);
            CHECK(std::abs(fd - an) <= tol * std::max({1.0, std::abs(fd), std::abs(an)}));
        }
    }
}

} // namespace

TEST_CASE("tape: arithmetic and broadcast primitives") {
    std::mt19937_64 rng(1);
    Mat a = random_mat(3, 4, rng), b = random_mat(3, 4, rng);
    Mat rowv = random_mat(1, 4, rng), colv = random_mat(3, 1, rng), s = random_mat(1, 1, rng);
    check_gradients({a, b, rowv, colv, s}, [](Tape& t, const std::vector<int>& id) {
        int x = t.mul(t.add(id[0], id[1]), t.sub(id[0], id[1]));
        x = t.add_rowvec(x, id[2]);
        x = t.add_colvec(x, id[3]);
        x = t.add_scalar(x, id[4]);
        x = t.scale(x, 0.7);
        Mat c(3, 4, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) c.a[i] = 0.1 * static_cast<double>(i) - 0.5;
        return t.sum_weighted(x, std::move(c));
    });
}

TEST_CASE("tape: matmul in both orientations") {
    std::mt19937_64 rng(2);
    Mat a = random_mat(3, 4, rng), b = random_mat(4, 2, rng), c = random_mat(5, 4, rng);
    check_gradients({a, b, c}, [](Tape& t, const std::vector<int>& id) {
        int p = t.matmul(id[0], id[1]);        // 3x2
        int q = t.matmul_nt(id[0], id[2]);     // 3x5
        return t.add(t.sum_all(p), t.sum_all(q));
    });
}

TEST_CASE("tape: elementwise nonlinearities") {
    std::mt19937_64 rng(3);
    Mat a = random_mat(4, 3, rng, 0.2, 2.0);  // positive, away from relu/clamp kinks
    check_gradients({a}, [](Tape& t, const std::vector<int>& id) {
        int x = t.relu(id[0]);
        x = t.add(x, t.tanh_(id[0]));
        x = t.add(x, t.sigmoid(id[0]));
        x = t.add(x, t.log_(id[0]));
        x = t.add(x, t.clamp_min(id[0], 0.05));
        x = t.add(x, t.softplus_beta(id[0], 1.7));
        return t.sum_all(x);
    });
}

TEST_CASE("tape: row scaling, cumulative sums, row reductions") {
    std::mt19937_64 rng(4);
    Mat a = random_mat(5, 3, rng), b = random_mat(5, 3, rng), w = random_mat(1, 5, rng);
    check_gradients({a, b, w}, [](Tape& t, const std::vector<int>& id) {
        int x = t.scale_rows(id[0], id[2]);
        x = t.cumsum_rows(x);
        int d = t.rowwise_dot(x, id[1]);
        Mat ww(5, 3, 0.0);
        for (std::size_t i = 0; i < ww.size(); ++i) ww.a[i] = 0.2 * static_cast<double>(i % 4) - 0.3;
        int r = t.rowwise_weighted_sum(id[1], std::move(ww));
        return t.add(t.sum_all(d), t.sum_all(r));
    });
}

TEST_CASE("tape: stacking, slicing and overlays") {
    std::mt19937_64 rng(5);
    Mat a = random_mat(4, 2, rng), r0 = random_mat(1, 3, rng), r1 = random_mat(1, 3, rng);
    check_gradients({a, r0, r1}, [](Tape& t, const std::vector<int>& id) {
        int h = t.hstack({id[0], t.col_of(id[0], 1)});        // 4x3
        int row = t.row_of(h, 2, 3);                          // 1x3
        int stacked = t.vstack({row, id[1], id[2]});          // 3x3
        int overlay = t.rows_overlay(Mat(4, 3, 0.5), {{1, id[1]}, {3, id[2]}});
        int total = t.add_n({t.sum_all(stacked), t.sum_all(overlay), t.sum_all(h)});
        return total;
    });
}

TEST_CASE("tape: softmax, layer norm, l2 normalization, log softmax") {
    std::mt19937_64 rng(6);
    Mat a = random_mat(4, 5, rng);
    std::vector<std::uint8_t> mask(20, 1);
    mask[3] = 0;
    mask[7] = 0;
    mask[15] = 0;  // partially masked rows
    check_gradients({a}, [mask](Tape& t, const std::vector<int>& id) {
        int sm = t.masked_softmax_rows(id[0], mask);
        int ln = t.layer_norm_rows(id[0]);
        int l2 = t.row_l2_normalize(id[0]);
        int ls = t.log_softmax_rows(id[0]);
        return t.add_n({t.sum_all(sm), t.sum_all(ln), t.sum_all(l2), t.sum_all(ls)});
    });
}

TEST_CASE("tape: const_times_scalar and fully masked softmax rows") {
    std::mt19937_64 rng(7);
    Mat s = random_mat(1, 1, rng);
    Mat c = random_mat(3, 4, rng);
    Mat cc = c;
    check_gradients({s}, [cc](Tape& t, const std::vector<int>& id) {
        return t.sum_all(t.const_times_scalar(cc, id[0]));
    });

    Tape tape;
    Mat x = random_mat(2, 3, rng);
    int id = tape.leaf(x);
    std::vector<std::uint8_t> mask(6, 0);  // row 0 fully masked
    mask[3] = mask[4] = mask[5] = 1;
    int sm = tape.masked_softmax_rows(id, mask);
    const Mat& y = tape.val(sm);
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(0, 1) == 0.0);
    CHECK(y.at(0, 2) == 0.0);
    CHECK(y.at(1, 0) + y.at(1, 1) + y.at(1, 2) == Approx(1.0).margin(1e-12));
}

TEST_CASE("tape: backward_seeded accumulates into leaves") {
    Tape tape;
    Mat a(2, 2, 1.0);
    int id = tape.leaf(a);
    int doubled = tape.scale(id, 2.0);
    Mat seed(2, 2, 1.0);
    tape.backward_seeded(doubled, seed);
    for (double g : tape.grad(id).a) CHECK(g == 2.0);
}

TEST_CASE("tape: allocation accounting grows with node count") {
    Tape tape;
    std::size_t before = tape.doubles_allocated;
    int a = tape.leaf(Mat(10, 10, 1.0));
    CHECK(tape.doubles_allocated == before + 100);
    tape.scale(a, 2.0);
    CHECK(tape.doubles_allocated == before + 200);
}
