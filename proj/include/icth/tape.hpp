#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace icth::nn {

// Dense row-major matrix; the only tensor shape the model needs.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    static Mat row_vector(const std::vector<double>& v) {
        Mat m(1, static_cast<int>(v.size()));
        m.a = v;
        return m;
    }

    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    std::size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }

    friend bool operator==(const Mat&, const Mat&) = default;
};

// Reverse-mode tape. Nodes are created in topological order; backward walks
// them in reverse, each node accumulating into its parents' gradients.
// Gradients are allocated lazily so untouched subgraphs cost nothing.
class Tape {
public:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Tape&)> back;
    };

    std::vector<Node> nodes;
    std::size_t doubles_allocated = 0;

    int push(Mat v, std::function<void(Tape&)> back = nullptr) {
        doubles_allocated += v.size();
        nodes.push_back(Node{std::move(v), Mat(), std::move(back)});
        return static_cast<int>(nodes.size()) - 1;
    }

    int leaf(Mat v) { return push(std::move(v)); }
    int constant(Mat v) { return push(std::move(v)); }

    const Mat& val(int id) const { return nodes[static_cast<std::size_t>(id)].val; }

    bool has_grad(int id) const { return !nodes[static_cast<std::size_t>(id)].grad.empty(); }

    Mat& grad(int id) {
        Node& n = nodes[static_cast<std::size_t>(id)];
        if (n.grad.empty() && !n.val.empty()) {
            n.grad = Mat(n.val.rows, n.val.cols, 0.0);
            doubles_allocated += n.grad.size();
        }
        return n.grad;
    }

    void backward(int id) {
        const Mat& v = val(id);
        if (v.rows != 1 || v.cols != 1) throw std::invalid_argument("backward: root must be 1x1");
        grad(id).a[0] = 1.0;
        run_backward(id);
    }

    void backward_seeded(int id, const Mat& seed) {
        if (seed.rows != val(id).rows || seed.cols != val(id).cols)
            throw std::invalid_argument("backward_seeded: seed shape mismatch");
        Mat& g = grad(id);
        for (std::size_t i = 0; i < g.size(); ++i) g.a[i] += seed.a[i];
        run_backward(id);
    }

    // ---- primitives -------------------------------------------------------

    int add(int a, int b) {
        Mat out = val(a);
        const Mat& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] += vb.a[i];
        return push(std::move(out), [a, b, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            Mat& gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.a[i] += g.a[i];
                gb.a[i] += g.a[i];
            }
        });
    }

    int add_n(const std::vector<int>& ids) {
        Mat out = val(ids.front());
        for (std::size_t k = 1; k < ids.size(); ++k) {
            const Mat& v = val(ids[k]);
            for (std::size_t i = 0; i < out.size(); ++i) out.a[i] += v.a[i];
        }
        return push(std::move(out), [ids, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            for (int id : ids) {
                Mat& gi = t.grad(id);
                for (std::size_t i = 0; i < g.size(); ++i) gi.a[i] += g.a[i];
            }
        });
    }

    int sub(int a, int b) {
        Mat out = val(a);
        const Mat& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] -= vb.a[i];
        return push(std::move(out), [a, b, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            Mat& gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.a[i] += g.a[i];
                gb.a[i] -= g.a[i];
            }
        });
    }

    int mul(int a, int b) {
        Mat out = val(a);
        const Mat& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] *= vb.a[i];
        return push(std::move(out), [a, b, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va = t.val(a);
            const Mat& vb2 = t.val(b);
            Mat& ga = t.grad(a);
            Mat& gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.a[i] += g.a[i] * vb2.a[i];
                gb.a[i] += g.a[i] * va.a[i];
            }
        });
    }

    int scale(int a, double s) {
        Mat out = val(a);
        for (double& x : out.a) x *= s;
        return push(std::move(out), [a, s, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += s * g.a[i];
        });
    }

    // out[i,j] = a[i,j] + v[j]; v is 1 x cols
    int add_rowvec(int a, int v) {
        Mat out = val(a);
        const Mat& vv = val(v);
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) += vv.a[static_cast<std::size_t>(j)];
        return push(std::move(out), [a, v, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            Mat& gv = t.grad(v);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i];
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gv.a[static_cast<std::size_t>(j)] += g.at(i, j);
        });
    }

    // out[i,j] = a[i,j] + v[i]; v holds `rows` entries
    int add_colvec(int a, int v) {
        Mat out = val(a);
        const Mat& vv = val(v);
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) += vv.a[static_cast<std::size_t>(i)];
        return push(std::move(out), [a, v, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            Mat& gv = t.grad(v);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i];
            for (int i = 0; i < g.rows; ++i) {
                double s = 0.0;
                for (int j = 0; j < g.cols; ++j) s += g.at(i, j);
                gv.a[static_cast<std::size_t>(i)] += s;
            }
        });
    }

    // out[i,j] = a[i,j] + s (s is 1x1)
    int add_scalar(int a, int s) {
        Mat out = val(a);
        const double sv = val(s).a[0];
        for (double& x : out.a) x += sv;
        return push(std::move(out), [a, s, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            Mat& gs = t.grad(s);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.a[i] += g.a[i];
                acc += g.a[i];
            }
            gs.a[0] += acc;
        });
    }

    // out = C * s where C is a captured constant and s is 1x1
    int const_times_scalar(Mat C, int s) {
        const double sv = val(s).a[0];
        Mat out = C;
        for (double& x : out.a) x *= sv;
        return push(std::move(out), [C = std::move(C), s, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& gs = t.grad(s);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g.a[i] * C.a[i];
            gs.a[0] += acc;
        });
    }

    int matmul(int a, int b) {
        const Mat& va = val(a);
        const Mat& vb = val(b);
        if (va.cols != vb.rows) throw std::invalid_argument("matmul: inner dims mismatch");
        Mat out(va.rows, vb.cols, 0.0);
        for (int i = 0; i < va.rows; ++i)
            for (int k = 0; k < va.cols; ++k) {
                double aik = va.at(i, k);
                if (aik == 0.0) continue;
                for (int j = 0; j < vb.cols; ++j) out.at(i, j) += aik * vb.at(k, j);
            }
        return push(std::move(out), [a, b, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va2 = t.val(a);
            const Mat& vb2 = t.val(b);
            Mat& ga = t.grad(a);
            Mat& gb = t.grad(b);
            // ga += g * b^T
            for (int i = 0; i < va2.rows; ++i)
                for (int k = 0; k < va2.cols; ++k) {
                    double s = 0.0;
                    for (int j = 0; j < vb2.cols; ++j) s += g.at(i, j) * vb2.at(k, j);
                    ga.at(i, k) += s;
                }
            // gb += a^T * g
            for (int k = 0; k < vb2.rows; ++k)
                for (int i = 0; i < va2.rows; ++i) {
                    double aik = va2.at(i, k);
                    if (aik == 0.0) continue;
                    for (int j = 0; j < vb2.cols; ++j) gb.at(k, j) += aik * g.at(i, j);
                }
        });
    }

    // out = a * b^T
    int matmul_nt(int a, int b) {
        const Mat& va = val(a);
        const Mat& vb = val(b);
        if (va.cols != vb.cols) throw std::invalid_argument("matmul_nt: inner dims mismatch");
        Mat out(va.rows, vb.rows, 0.0);
        for (int i = 0; i < va.rows; ++i)
            for (int j = 0; j < vb.rows; ++j) {
                double s = 0.0;
                for (int k = 0; k < va.cols; ++k) s += va.at(i, k) * vb.at(j, k);
                out.at(i, j) = s;
            }
        return push(std::move(out), [a, b, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va2 = t.val(a);
            const Mat& vb2 = t.val(b);
            Mat& ga = t.grad(a);
            Mat& gb = t.grad(b);
            for (int i = 0; i < va2.rows; ++i)
                for (int j = 0; j < vb2.rows; ++j) {
                    double gij = g.at(i, j);
                    if (gij == 0.0) continue;
                    for (int k = 0; k < va2.cols; ++k) {
                        ga.at(i, k) += gij * vb2.at(j, k);
                        gb.at(j, k) += gij * va2.at(i, k);
                    }
                }
        });
    }

    int relu(int a) {
        Mat out = val(a);
        for (double& x : out.a) x = x > 0.0 ? x : 0.0;
        return push(std::move(out), [a, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va = t.val(a);
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += va.a[i] > 0.0 ? g.a[i] : 0.0;
        });
    }

    int tanh_(int a) {
        Mat out = val(a);
        for (double& x : out.a) x = std::tanh(x);
        return push(std::move(out), [a, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& y = t.val(self);
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i] * (1.0 - y.a[i] * y.a[i]);
        });
    }

    int sigmoid(int a) {
        Mat out = val(a);
        for (double& x : out.a) x = 1.0 / (1.0 + std::exp(-x));
        return push(std::move(out), [a, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& y = t.val(self);
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i] * y.a[i] * (1.0 - y.a[i]);
        });
    }

    int log_(int a) {
        Mat out = val(a);
        for (double& x : out.a) x = std::log(x);
        return push(std::move(out), [a, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va = t.val(a);
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i] / va.a[i];
        });
    }

    int clamp_min(int a, double lo) {
        Mat out = val(a);
        for (double& x : out.a) x = x < lo ? lo : x;
        return push(std::move(out), [a, lo, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va = t.val(a);
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.a[i] += va.a[i] > lo ? g.a[i] : 0.0;
        });
    }

    // f(x) = beta * log(1 + exp(x / beta)), computed stably.
    int softplus_beta(int a, double beta) {
        Mat out = val(a);
        for (double& x : out.a) {
            double z = x / beta;
            double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
            x = beta * sp;
        }
        return push(std::move(out), [a, beta, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va = t.val(a);
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                double z = va.a[i] / beta;
                ga.a[i] += g.a[i] / (1.0 + std::exp(-z));
            }
        });
    }

    // out[i,j] = a[i,j] * w[i], where w holds `rows` entries (any shape)
    int scale_rows(int a, int w) {
        const Mat& va = val(a);
        const Mat& vw = val(w);
        if (static_cast<int>(vw.size()) != va.rows) throw std::invalid_argument("scale_rows: size mismatch");
        Mat out = va;
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) *= vw.a[static_cast<std::size_t>(i)];
        return push(std::move(out), [a, w, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va2 = t.val(a);
            const Mat& vw2 = t.val(w);
            Mat& ga = t.grad(a);
            Mat& gw = t.grad(w);
            for (int i = 0; i < g.rows; ++i) {
                double acc = 0.0;
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(i, j) += g.at(i, j) * vw2.a[static_cast<std::size_t>(i)];
                    acc += g.at(i, j) * va2.at(i, j);
                }
                gw.a[static_cast<std::size_t>(i)] += acc;
            }
        });
    }

    // out[i,:] = sum_{i' <= i} a[i',:]
    int cumsum_rows(int a) {
        Mat out = val(a);
        for (int i = 1; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) += out.at(i - 1, j);
        return push(std::move(out), [a, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            std::vector<double> suffix(static_cast<std::size_t>(g.cols), 0.0);
            for (int i = g.rows - 1; i >= 0; --i)
                for (int j = 0; j < g.cols; ++j) {
                    suffix[static_cast<std::size_t>(j)] += g.at(i, j);
                    ga.at(i, j) += suffix[static_cast<std::size_t>(j)];
                }
        });
    }

    // out[i] = sum_j a[i,j] * b[i,j]  (n x 1)
    int rowwise_dot(int a, int b) {
        const Mat& va = val(a);
        const Mat& vb = val(b);
        Mat out(va.rows, 1, 0.0);
        for (int i = 0; i < va.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < va.cols; ++j) s += va.at(i, j) * vb.at(i, j);
            out.at(i, 0) = s;
        }
        return push(std::move(out), [a, b, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va2 = t.val(a);
            const Mat& vb2 = t.val(b);
            Mat& ga = t.grad(a);
            Mat& gb = t.grad(b);
            for (int i = 0; i < va2.rows; ++i) {
                double gi = g.at(i, 0);
                if (gi == 0.0) continue;
                for (int j = 0; j < va2.cols; ++j) {
                    ga.at(i, j) += gi * vb2.at(i, j);
                    gb.at(i, j) += gi * va2.at(i, j);
                }
            }
        });
    }

    // out[i] = sum_j W[i,j] * a[i,j] with a captured constant weight matrix
    int rowwise_weighted_sum(int a, Mat W) {
        const Mat& va = val(a);
        Mat out(va.rows, 1, 0.0);
        for (int i = 0; i < va.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < va.cols; ++j) s += W.at(i, j) * va.at(i, j);
            out.at(i, 0) = s;
        }
        return push(std::move(out), [a, W = std::move(W), self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            for (int i = 0; i < ga.rows; ++i) {
                double gi = g.at(i, 0);
                if (gi == 0.0) continue;
                for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += gi * W.at(i, j);
            }
        });
    }

    int hstack(const std::vector<int>& ids) {
        int rows = val(ids.front()).rows;
        int cols = 0;
        for (int id : ids) cols += val(id).cols;
        Mat out(rows, cols, 0.0);
        int off = 0;
        for (int id : ids) {
            const Mat& v = val(id);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < v.cols; ++j) out.at(i, off + j) = v.at(i, j);
            off += v.cols;
        }
        return push(std::move(out), [ids, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            int off2 = 0;
            for (int id : ids) {
                Mat& gi = t.grad(id);
                for (int i = 0; i < gi.rows; ++i)
                    for (int j = 0; j < gi.cols; ++j) gi.at(i, j) += g.at(i, off2 + j);
                off2 += gi.cols;
            }
        });
    }

    // Row-wise softmax over entries with mask != 0; masked entries output 0.
    // A fully masked row outputs all zeros.
    int masked_softmax_rows(int a, std::vector<std::uint8_t> mask) {
        const Mat& va = val(a);
        if (mask.size() != va.size()) throw std::invalid_argument("masked_softmax_rows: mask size mismatch");
        Mat out(va.rows, va.cols, 0.0);
        for (int i = 0; i < va.rows; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < va.cols; ++j)
                if (mask[static_cast<std::size_t>(i) * va.cols + j]) mx = std::max(mx, va.at(i, j));
            if (!std::isfinite(mx)) continue;
            double z = 0.0;
            for (int j = 0; j < va.cols; ++j)
                if (mask[static_cast<std::size_t>(i) * va.cols + j]) {
                    out.at(i, j) = std::exp(va.at(i, j) - mx);
                    z += out.at(i, j);
                }
            for (int j = 0; j < va.cols; ++j) out.at(i, j) /= z;
        }
        return push(std::move(out), [a, mask = std::move(mask), self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& y = t.val(self);
            Mat& ga = t.grad(a);
            for (int i = 0; i < y.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < y.cols; ++j) dot += g.at(i, j) * y.at(i, j);
                for (int j = 0; j < y.cols; ++j)
                    if (mask[static_cast<std::size_t>(i) * y.cols + j])
                        ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
            }
        });
    }

    // Row-wise normalization to zero mean, unit variance (no learned affine).
    int layer_norm_rows(int a, double eps = 1e-5) {
        const Mat& va = val(a);
        Mat out(va.rows, va.cols, 0.0);
        for (int i = 0; i < va.rows; ++i) {
            double mean = 0.0;
            for (int j = 0; j < va.cols; ++j) mean += va.at(i, j);
            mean /= va.cols;
            double var = 0.0;
            for (int j = 0; j < va.cols; ++j) {
                double d = va.at(i, j) - mean;
                var += d * d;
            }
            var /= va.cols;
            double inv = 1.0 / std::sqrt(var + eps);
            for (int j = 0; j < va.cols; ++j) out.at(i, j) = (va.at(i, j) - mean) * inv;
        }
        return push(std::move(out), [a, eps, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va2 = t.val(a);
            const Mat& y = t.val(self);
            Mat& ga = t.grad(a);
            const int n = va2.cols;
            for (int i = 0; i < va2.rows; ++i) {
                double mean = 0.0;
                for (int j = 0; j < n; ++j) mean += va2.at(i, j);
                mean /= n;
                double var = 0.0;
                for (int j = 0; j < n; ++j) {
                    double d = va2.at(i, j) - mean;
                    var += d * d;
                }
                var /= n;
                double inv = 1.0 / std::sqrt(var + eps);
                double g_mean = 0.0, gy_mean = 0.0;
                for (int j = 0; j < n; ++j) {
                    g_mean += g.at(i, j);
                    gy_mean += g.at(i, j) * y.at(i, j);
                }
                g_mean /= n;
                gy_mean /= n;
                for (int j = 0; j < n; ++j)
                    ga.at(i, j) += inv * (g.at(i, j) - g_mean - y.at(i, j) * gy_mean);
            }
        });
    }

    // Rows scaled to unit Euclidean norm; rows must be nonzero.
    int row_l2_normalize(int a) {
        const Mat& va = val(a);
        Mat out = va;
        for (int i = 0; i < va.rows; ++i) {
            double nrm = 0.0;
            for (int j = 0; j < va.cols; ++j) nrm += va.at(i, j) * va.at(i, j);
            nrm = std::sqrt(nrm);
            if (!(nrm > 0.0)) throw std::invalid_argument("row_l2_normalize: zero-norm row");
            for (int j = 0; j < va.cols; ++j) out.at(i, j) /= nrm;
        }
        return push(std::move(out), [a, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& va2 = t.val(a);
            const Mat& y = t.val(self);
            Mat& ga = t.grad(a);
            for (int i = 0; i < va2.rows; ++i) {
                double nrm = 0.0, dot = 0.0;
                for (int j = 0; j < va2.cols; ++j) {
                    nrm += va2.at(i, j) * va2.at(i, j);
                    dot += g.at(i, j) * y.at(i, j);
                }
                nrm = std::sqrt(nrm);
                for (int j = 0; j < va2.cols; ++j)
                    ga.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / nrm;
            }
        });
    }

    int log_softmax_rows(int a) {
        const Mat& va = val(a);
        Mat out = va;
        for (int i = 0; i < va.rows; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < va.cols; ++j) mx = std::max(mx, va.at(i, j));
            double z = 0.0;
            for (int j = 0; j < va.cols; ++j) z += std::exp(va.at(i, j) - mx);
            double lse = mx + std::log(z);
            for (int j = 0; j < va.cols; ++j) out.at(i, j) -= lse;
        }
        return push(std::move(out), [a, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            const Mat& y = t.val(self);
            Mat& ga = t.grad(a);
            for (int i = 0; i < y.rows; ++i) {
                double gsum = 0.0;
                for (int j = 0; j < y.cols; ++j) gsum += g.at(i, j);
                for (int j = 0; j < y.cols; ++j)
                    ga.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gsum;
            }
        });
    }

    // sum of W .* a as a 1x1 node, W a captured constant
    int sum_weighted(int a, Mat W) {
        const Mat& va = val(a);
        double s = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) s += W.a[i] * va.a[i];
        Mat out(1, 1, s);
        return push(std::move(out), [a, W = std::move(W), self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += g.a[0] * W.a[i];
        });
    }

    int sum_all(int a) {
        const Mat& va = val(a);
        return sum_weighted(a, Mat(va.rows, va.cols, 1.0));
    }

    // out (1 x take) = a[r, 0:take]
    int row_of(int a, int r, int take) {
        const Mat& va = val(a);
        if (r >= va.rows || take > va.cols) throw std::invalid_argument("row_of: out of range");
        Mat out(1, take, 0.0);
        for (int j = 0; j < take; ++j) out.at(0, j) = va.at(r, j);
        return push(std::move(out), [a, r, take, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            for (int j = 0; j < take; ++j) ga.at(r, j) += g.at(0, j);
        });
    }

    // out (n x 1) = a[:, c]
    int col_of(int a, int c) {
        const Mat& va = val(a);
        if (c >= va.cols) throw std::invalid_argument("col_of: out of range");
        Mat out(va.rows, 1, 0.0);
        for (int i = 0; i < va.rows; ++i) out.at(i, 0) = va.at(i, c);
        return push(std::move(out), [a, c, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            Mat& ga = t.grad(a);
            for (int i = 0; i < ga.rows; ++i) ga.at(i, c) += g.at(i, 0);
        });
    }

    // base rows (constant), with selected rows replaced by 1 x cols nodes
    int rows_overlay(Mat base, const std::vector<std::pair<int, int>>& row_nodes) {
        Mat out = base;
        for (const auto& [r, id] : row_nodes) {
            const Mat& v = val(id);
            for (int j = 0; j < out.cols; ++j) out.at(r, j) = v.at(0, j);
        }
        return push(std::move(out), [row_nodes, self = next_id()](Tape& t) {
            const Mat& g = t.nodes[self].grad;
            if (g.empty()) return;
            for (const auto& [r, id] : row_nodes) {
                Mat& gi = t.grad(id);
                for (int j = 0; j < gi.cols; ++j) gi.at(0, j) += g.at(r, j);
            }
        });
    }

    // stack of 1 x cols nodes into an n x cols matrix
    int vstack(const std::vector<int>& ids) {
        int cols = val(ids.front()).cols;
        Mat base(static_cast<int>(ids.size()), cols, 0.0);
        std::vector<std::pair<int, int>> rows;
        rows.reserve(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) rows.emplace_back(static_cast<int>(i), ids[i]);
        return rows_overlay(std::move(base), rows);
    }

private:
    int next_id() const { return static_cast<int>(nodes.size()); }

    void run_backward(int from) {
        for (int i = from; i >= 0; --i) {
            Node& n = nodes[static_cast<std::size_t>(i)];
            if (n.back && !n.grad.empty()) n.back(*this);
        }
    }
};

} // namespace icth::nn
