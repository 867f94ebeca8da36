#include "umt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "umt/error.hpp"

namespace umt::ops {

namespace {

using detail::Node;

void require_matrix(const Tensor& a, const char* op) {
    if (a.ndim() != 2) {
        throw ShapeError(std::string(op) + " expects a matrix, got shape " + shape_string(a.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
    }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += av * bp[j];
            }
        }
    }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += ai[j] * bp[j];
            }
            c[i * k + p] += acc;
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                cp[j] += av * bi[j];
            }
        }
    }
}

template <class Forward, class Derivative>
Tensor elementwise(const Tensor& a, Forward forward, Derivative derivative) {
    std::vector<double> out(a.size());
    const auto in = a.data();
    std::transform(in.begin(), in.end(), out.begin(), forward);
    return Tensor::make_result(a.shape(), std::move(out), {a}, [derivative](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) {
            return;
        }
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * derivative(p.data[i], self.data[i]);
        }
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    }
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t n = b.shape()[1];
    std::vector<double> out(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    add_macs(static_cast<std::uint64_t>(m) * k * n);
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            gemm_nt(self.grad.data(), pb.data.data(), pa.grad_buffer().data(), m, n, k);
        }
        if (pb.requires_grad) {
            gemm_tn(pa.data.data(), self.grad.data(), pb.grad_buffer().data(), m, k, n);
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    std::vector<double> out(m * n);
    const auto in = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = in[i * n + j];
        }
    }
    return Tensor::make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                g[i * n + j] += self.grad[j * m + i];
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.begin(), std::plus<>{});
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (auto& parent : self.parents) {
            if (parent->requires_grad) {
                auto& g = parent->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += self.grad[i];
                }
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.begin(), std::minus<>{});
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) {
                continue;
            }
            const double sign = k == 0 ? 1.0 : -1.0;
            auto& g = p.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += sign * self.grad[i];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.begin(), std::multiplies<>{});
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pb.data[i];
            }
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pa.data[i];
            }
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return elementwise(
        a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    require_matrix(a, "add_row");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    if (row.size() != n || row.rows() != 1) {
        throw ShapeError("add_row: row of shape " + shape_string(row.shape()) + " does not match matrix " +
                         shape_string(a.shape()));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto r = row.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] += r[j];
        }
    }
    return Tensor::make_result(a.shape(), std::move(out), {a, row}, [m, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pr = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
        if (pr.requires_grad) {
            auto& g = pr.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    g[j] += self.grad[i * n + j];
                }
            }
        }
    });
}

Tensor relu(const Tensor& a) {
    return elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return elementwise(
        a,
        [](double x) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
    return elementwise(
        a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    const Shape& shape = a.shape();
    if (axis >= shape.size()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape));
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t d = 0; d < axis; ++d) {
        outer *= shape[d];
    }
    for (std::size_t d = axis + 1; d < shape.size(); ++d) {
        inner *= shape[d];
    }
    const std::size_t len = shape[axis];
    const auto in = a.data();
    for (double v : in) {
        if (!std::isfinite(v)) {
            throw NumericError("softmax: non-finite input");
        }
    }
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double peak = in[base];
            for (std::size_t k = 1; k < len; ++k) {
                peak = std::max(peak, in[base + k * inner]);
            }
            double total = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double e = std::exp(in[base + k * inner] - peak);
                out[base + k * inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < len; ++k) {
                out[base + k * inner] /= total;
            }
        }
    }
    return Tensor::make_result(shape, std::move(out), {a}, [outer, inner, len](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = o * len * inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < len; ++k) {
                    dot += self.grad[base + k * inner] * self.data[base + k * inner];
                }
                for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t idx = base + k * inner;
                    g[idx] += self.data[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    require_matrix(x, "layer_norm");
    const std::size_t m = x.shape()[0];
    const std::size_t n = x.shape()[1];
    if (gain.size() != n || bias.size() != n) {
        throw ShapeError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match width " + std::to_string(n));
    }
    const auto in = x.data();
    const auto g = gain.data();
    const auto b = bias.data();
    std::vector<double> normalized(m * n);
    std::vector<double> inv_std(m);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += in[i * n + j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = in[i * n + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (in[i * n + j] - mu) * inv_std[i];
            normalized[i * n + j] = h;
            out[i * n + j] = h * g[j] + b[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias},
        [m, n, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
            Node& px = *self.parents[0];
            Node& pg = *self.parents[1];
            Node& pb = *self.parents[2];
            if (pg.requires_grad) {
                auto& gg = pg.grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gg[j] += self.grad[i * n + j] * normalized[i * n + j];
                    }
                }
            }
            if (pb.requires_grad) {
                auto& gb = pb.grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gb[j] += self.grad[i * n + j];
                    }
                }
            }
            if (px.requires_grad) {
                auto& gx = px.grad_buffer();
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[i * n + j] * pg.data[j];
                        mean_dh += dh;
                        mean_dh_h += dh * normalized[i * n + j];
                    }
                    mean_dh *= inv_n;
                    mean_dh_h *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[i * n + j] * pg.data[j];
                        gx[i * n + j] += inv_std[i] * (dh - mean_dh - normalized[i * n + j] * mean_dh_h);
                    }
                }
            }
        });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.size());
    for (double& m : mask) {
        m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    }
    std::vector<double> out(x.size());
    std::transform(x.data().begin(), x.data().end(), mask.begin(), out.begin(), std::multiplies<>{});
    return Tensor::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * mask[i];
        }
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix(a, "slice_rows");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    if (begin + count > m) {
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for shape " + shape_string(a.shape()));
    }
    const auto in = a.data();
    std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * n),
                            in.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
    return Tensor::make_result({count, n}, std::move(out), {a}, [begin, n](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            g[begin * n + i] += self.grad[i];
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix(a, "slice_cols");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    if (begin + count > n) {
        throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for shape " + shape_string(a.shape()));
    }
    const auto in = a.data();
    std::vector<double> out(m * count);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(i * n + begin), count,
                    out.begin() + static_cast<std::ptrdiff_t>(i * count));
    }
    return Tensor::make_result({m, count}, std::move(out), {a}, [m, n, begin, count](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < count; ++j) {
                g[i * n + begin + j] += self.grad[i * count + j];
            }
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    const std::size_t m = parts[0].rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.shape()[0] != m) {
            throw ShapeError("concat_cols: row counts differ (" + shape_string(parts[0].shape()) + " vs " +
                             shape_string(p.shape()) + ")");
        }
        widths.push_back(p.shape()[1]);
        total += p.shape()[1];
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto in = parts[k].data();
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                        out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
        }
        offset += widths[k];
    }
    return Tensor::make_result({m, total}, std::move(out), parts, [m, total, widths](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            Node& p = *self.parents[k];
            if (p.requires_grad) {
                auto& g = p.grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < widths[k]; ++j) {
                        g[i * widths[k] + j] += self.grad[i * total + offset + j];
                    }
                }
            }
            offset += widths[k];
        }
    });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
    require_matrix(a, "gather_rows");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    std::vector<double> out(idx.size() * n);
    const auto in = a.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= m) {
            throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range for shape " +
                             shape_string(a.shape()));
        }
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(idx[r] * n), n,
                    out.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    const std::size_t count = idx.size();
    return Tensor::make_result({count, n}, std::move(out), {a}, [n, idx = std::move(idx)](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                g[idx[r] * n + j] += self.grad[r * n + j];
            }
        }
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) {
        total += v;
    }
    return Tensor::make_result({}, {total}, {a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (double& v : g) {
            v += self.grad[0];
        }
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) {
        throw ShapeError("mean of an empty tensor");
    }
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

}  // namespace umt::ops
