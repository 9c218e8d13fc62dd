#include "cxrgen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cxr {
inline namespace CXR_NUMERIC_NS {

namespace {

bool tracked(std::initializer_list<const Tensor*> operands) {
    if (!active_tape()) return false;
    return std::any_of(operands.begin(), operands.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + " needs a rank-2 tensor, got " + shape_to_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

AttentionMask::AttentionMask(std::size_t queries, std::size_t keys, bool fill)
    : queries_(queries), keys_(keys), cells_(queries * keys, fill ? 1 : 0) {}

AttentionMask AttentionMask::causal(std::size_t length) {
    AttentionMask mask(length, length, false);
    for (std::size_t q = 0; q < length; ++q) {
        for (std::size_t k = 0; k <= q; ++k) mask.set(q, k, true);
    }
    return mask;
}

void AttentionMask::block_key(std::size_t k) {
    for (std::size_t q = 0; q < queries_; ++q) set(q, k, false);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    std::vector<Scalar> c(m * n, Scalar(0));
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        Scalar* crow = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Scalar aip = av[i * k + p];
            const Scalar* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    const bool track = tracked({&a, &b});
    Tensor out({m, n}, std::move(c), track);
    if (track) {
        active_tape()->record({a, b}, out, [a, b, out, m, k, n]() mutable {
            const auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                const auto bv = b.values();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        Scalar acc = 0;
                        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                const auto av = a.values();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const Scalar aip = av[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Scalar> t(m * n);
    const auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t[j * m + i] = av[i * n + j];
    const bool track = tracked({&a});
    Tensor out({n, m}, std::move(t), track);
    if (track) {
        active_tape()->record({a}, out, [a, out, m, n]() mutable {
            const auto g = out.grad();
            auto ga = a.mutable_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Scalar> r(a.size());
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = av[i] + bv[i];
    const bool track = tracked({&a, &b});
    Tensor out(a.shape(), std::move(r), track);
    if (track) {
        active_tape()->record({a, b}, out, [a, b, out]() mutable {
            const auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Scalar> r(a.size());
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = av[i] * bv[i];
    const bool track = tracked({&a, &b});
    Tensor out(a.shape(), std::move(r), track);
    if (track) {
        active_tape()->record({a, b}, out, [a, b, out]() mutable {
            const auto g = out.grad();
            const auto av = a.values();
            const auto bv = b.values();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, Scalar factor) {
    std::vector<Scalar> r(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = av[i] * factor;
    const bool track = tracked({&a});
    Tensor out(a.shape(), std::move(r), track);
    if (track) {
        active_tape()->record({a}, out, [a, out, factor]() mutable {
            const auto g = out.grad();
            auto ga = a.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
        });
    }
    return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    require_rank2(a, "add_row");
    const std::size_t m = a.rows(), n = a.cols();
    if (row.size() != n || (row.rank() == 2 && row.rows() != 1) || row.rank() > 2) {
        throw ShapeError("add_row: row " + shape_to_string(row.shape()) + " does not match " +
                         shape_to_string(a.shape()));
    }
    std::vector<Scalar> r(a.size());
    const auto av = a.values();
    const auto rv = row.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) r[i * n + j] = av[i * n + j] + rv[j];
    const bool track = tracked({&a, &row});
    Tensor out(a.shape(), std::move(r), track);
    if (track) {
        active_tape()->record({a, row}, out, [a, row, out, m, n]() mutable {
            const auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (row.requires_grad()) {
                auto gr = row.mutable_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
            }
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add_row(matmul(x, weight), bias);
}

Tensor relu(const Tensor& a) {
    std::vector<Scalar> r(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = av[i] > Scalar(0) ? av[i] : Scalar(0);
    const bool track = tracked({&a});
    Tensor out(a.shape(), std::move(r), track);
    if (track) {
        active_tape()->record({a}, out, [a, out]() mutable {
            const auto g = out.grad();
            const auto av = a.values();
            auto ga = a.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (av[i] > Scalar(0)) ga[i] += g[i];
        });
    }
    return out;
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (auto v : a.values()) acc += v;
    const bool track = tracked({&a});
    Tensor out({1}, {static_cast<Scalar>(acc)}, track);
    if (track) {
        active_tape()->record({a}, out, [a, out]() mutable {
            const Scalar g = out.grad()[0];
            auto ga = a.mutable_grad();
            for (auto& v : ga) v += g;
        });
    }
    return out;
}

Tensor add_n(std::span<const Tensor> terms) {
    if (terms.empty()) throw ContractError("add_n needs at least one term");
    Tensor total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    return total;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(x.shape()));
    }
    const auto& shape = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t n = shape[axis];

    std::vector<Scalar> y(x.size());
    const auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t r = 0; r < inner; ++r) {
            const auto idx = [&](std::size_t i) { return (o * n + i) * inner + r; };
            Scalar mx = xv[idx(0)];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xv[idx(i)]);
            double denom = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(static_cast<double>(xv[idx(i)] - mx));
                y[idx(i)] = static_cast<Scalar>(e);
                denom += e;
            }
            for (std::size_t i = 0; i < n; ++i) y[idx(i)] = static_cast<Scalar>(y[idx(i)] / denom);
        }
    }
    const bool track = tracked({&x});
    Tensor out(shape, std::move(y), track);
    if (track) {
        active_tape()->record({x}, out, [x, out, outer, inner, n]() mutable {
            const auto g = out.grad();
            const auto yv = out.values();
            auto gx = x.mutable_grad();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t r = 0; r < inner; ++r) {
                    const auto idx = [&](std::size_t i) { return (o * n + i) * inner + r; };
                    double dot = 0.0;
                    for (std::size_t i = 0; i < n; ++i) dot += static_cast<double>(g[idx(i)]) * yv[idx(i)];
                    for (std::size_t i = 0; i < n; ++i)
                        gx[idx(i)] += static_cast<Scalar>(yv[idx(i)] * (g[idx(i)] - dot));
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
    const std::size_t n = last_dim(x);
    if (gain.size() != n || bias.size() != n) {
        throw ShapeError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                         shape_to_string(bias.shape()) + " do not match last axis of " +
                         shape_to_string(x.shape()));
    }
    const std::size_t rows = x.size() / n;
    std::vector<Scalar> y(x.size());
    std::vector<Scalar> xhat(x.size());
    std::vector<Scalar> inv_std(rows);
    const auto xv = x.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const Scalar* row = xv.data() + r * n;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += row[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = row[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        inv_std[r] = static_cast<Scalar>(inv);
        for (std::size_t i = 0; i < n; ++i) {
            const auto h = static_cast<Scalar>((row[i] - mean) * inv);
            xhat[r * n + i] = h;
            y[r * n + i] = h * gv[i] + bv[i];
        }
    }
    const bool track = tracked({&x, &gain, &bias});
    Tensor out(x.shape(), std::move(y), track);
    if (track) {
        active_tape()->record(
            {x, gain, bias}, out,
            [x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n]() mutable {
                const auto g = out.grad();
                const auto gv = gain.values();
                if (x.requires_grad()) {
                    auto gx = x.mutable_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                        double mean_gh = 0.0, mean_gh_h = 0.0;
                        for (std::size_t i = 0; i < n; ++i) {
                            const double gh = static_cast<double>(g[r * n + i]) * gv[i];
                            mean_gh += gh;
                            mean_gh_h += gh * xhat[r * n + i];
                        }
                        mean_gh /= static_cast<double>(n);
                        mean_gh_h /= static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i) {
                            const double gh = static_cast<double>(g[r * n + i]) * gv[i];
                            gx[r * n + i] += static_cast<Scalar>(
                                inv_std[r] * (gh - mean_gh - xhat[r * n + i] * mean_gh_h));
                        }
                    }
                }
                if (gain.requires_grad()) {
                    auto gg = gain.mutable_grad();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t i = 0; i < n; ++i) gg[i] += g[r * n + i] * xhat[r * n + i];
                }
                if (bias.requires_grad()) {
                    auto gb = bias.mutable_grad();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t i = 0; i < n; ++i) gb[i] += g[r * n + i];
                }
            });
    }
    return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask* mask) {
    require_rank2(q, "attention query");
    require_rank2(k, "attention key");
    require_rank2(v, "attention value");
    const std::size_t lq = q.rows(), lk = k.rows(), d = q.cols(), dv = v.cols();
    if (k.cols() != d) {
        throw ShapeError("attention: query " + shape_to_string(q.shape()) + " and key " +
                         shape_to_string(k.shape()) + " widths differ");
    }
    if (v.rows() != lk) {
        throw ShapeError("attention: value " + shape_to_string(v.shape()) + " rows differ from key " +
                         shape_to_string(k.shape()));
    }
    if (mask && (mask->queries() != lq || mask->keys() != lk)) {
        throw ShapeError("attention: mask is " + std::to_string(mask->queries()) + "x" +
                         std::to_string(mask->keys()) + ", expected " + std::to_string(lq) + "x" +
                         std::to_string(lk));
    }
    const auto visible = [mask](std::size_t i, std::size_t j) { return !mask || mask->allowed(i, j); };
    const Scalar factor = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

    const auto qv = q.values();
    const auto kv = k.values();
    const auto vv = v.values();
    std::vector<Scalar> probs(lq * lk, Scalar(0));
    std::vector<Scalar> o(lq * dv, Scalar(0));
    std::vector<Scalar> logits(lk);
    for (std::size_t i = 0; i < lq; ++i) {
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < lk; ++j) {
            if (!visible(i, j)) continue;
            Scalar dot = 0;
            for (std::size_t c = 0; c < d; ++c) dot += qv[i * d + c] * kv[j * d + c];
            logits[j] = dot * factor;
            mx = any ? std::max(mx, logits[j]) : logits[j];
            any = true;
        }
        if (!any) {
            throw ContractError("attention: every key is masked for query row " + std::to_string(i));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < lk; ++j) {
            if (!visible(i, j)) continue;
            const double e = std::exp(static_cast<double>(logits[j] - mx));
            probs[i * lk + j] = static_cast<Scalar>(e);
            denom += e;
        }
        Scalar* orow = o.data() + i * dv;
        for (std::size_t j = 0; j < lk; ++j) {
            if (!visible(i, j)) continue;
            const auto p = static_cast<Scalar>(probs[i * lk + j] / denom);
            probs[i * lk + j] = p;
            const Scalar* vrow = vv.data() + j * dv;
            for (std::size_t c = 0; c < dv; ++c) orow[c] += p * vrow[c];
        }
    }

    const bool track = tracked({&q, &k, &v});
    Tensor out({lq, dv}, std::move(o), track);
    if (track) {
        std::vector<std::uint8_t> vis(lq * lk);
        for (std::size_t i = 0; i < lq; ++i)
            for (std::size_t j = 0; j < lk; ++j) vis[i * lk + j] = visible(i, j) ? 1 : 0;
        active_tape()->record(
            {q, k, v}, out,
            [q, k, v, out, probs = std::move(probs), vis = std::move(vis), lq, lk, d, dv, factor]() mutable {
                const auto g = out.grad();
                const auto qv = q.values();
                const auto kv = k.values();
                const auto vv = v.values();
                if (v.requires_grad()) {
                    auto gv = v.mutable_grad();
                    for (std::size_t i = 0; i < lq; ++i)
                        for (std::size_t j = 0; j < lk; ++j) {
                            if (!vis[i * lk + j]) continue;
                            const Scalar p = probs[i * lk + j];
                            for (std::size_t c = 0; c < dv; ++c) gv[j * dv + c] += p * g[i * dv + c];
                        }
                }
                if (!q.requires_grad() && !k.requires_grad()) return;
                std::vector<Scalar> gs(lq * lk, Scalar(0));
                for (std::size_t i = 0; i < lq; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < lk; ++j) {
                        if (!vis[i * lk + j]) continue;
                        Scalar gp = 0;
                        for (std::size_t c = 0; c < dv; ++c) gp += g[i * dv + c] * vv[j * dv + c];
                        gs[i * lk + j] = gp;
                        dot += static_cast<double>(gp) * probs[i * lk + j];
                    }
                    for (std::size_t j = 0; j < lk; ++j) {
                        if (!vis[i * lk + j]) continue;
                        gs[i * lk + j] =
                            static_cast<Scalar>(probs[i * lk + j] * (gs[i * lk + j] - dot)) * factor;
                    }
                }
                if (q.requires_grad()) {
                    auto gq = q.mutable_grad();
                    for (std::size_t i = 0; i < lq; ++i)
                        for (std::size_t j = 0; j < lk; ++j) {
                            const Scalar s = gs[i * lk + j];
                            if (s == Scalar(0)) continue;
                            for (std::size_t c = 0; c < d; ++c) gq[i * d + c] += s * kv[j * d + c];
                        }
                }
                if (k.requires_grad()) {
                    auto gk = k.mutable_grad();
                    for (std::size_t i = 0; i < lq; ++i)
                        for (std::size_t j = 0; j < lk; ++j) {
                            const Scalar s = gs[i * lk + j];
                            if (s == Scalar(0)) continue;
                            for (std::size_t c = 0; c < d; ++c) gk[j * d + c] += s * qv[i * d + c];
                        }
                }
            });
    }
    return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    require_rank2(a, "slice_cols");
    const std::size_t m = a.rows(), n = a.cols();
    if (count == 0 || begin + count > n) {
        throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_to_string(a.shape()));
    }
    std::vector<Scalar> r(m * count);
    const auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) r[i * count + j] = av[i * n + begin + j];
    const bool track = tracked({&a});
    Tensor out({m, count}, std::move(r), track);
    if (track) {
        active_tape()->record({a}, out, [a, out, m, n, begin, count]() mutable {
            const auto g = out.grad();
            auto ga = a.mutable_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += g[i * count + j];
        });
    }
    return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_cols needs at least one part");
    for (const auto& p : parts) require_rank2(p, "concat_cols");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    bool track = false;
    for (const auto& p : parts) {
        if (p.rows() != m) {
            throw ShapeError("concat_cols: row counts differ, " + shape_to_string(parts[0].shape()) + " vs " +
                             shape_to_string(p.shape()));
        }
        n += p.cols();
        track = track || p.requires_grad();
    }
    track = track && active_tape();
    std::vector<Scalar> r(m * n);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const auto pv = p.values();
        const std::size_t w = p.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) r[i * n + offset + j] = pv[i * w + j];
        offset += w;
    }
    Tensor out({m, n}, std::move(r), track);
    if (track) {
        std::vector<Tensor> operands(parts.begin(), parts.end());
        active_tape()->record(operands, out, [operands, out, m, n]() mutable {
            const auto g = out.grad();
            std::size_t offset = 0;
            for (auto& p : operands) {
                const std::size_t w = p.cols();
                if (p.requires_grad()) {
                    auto gp = p.mutable_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + offset + j];
                }
                offset += w;
            }
        });
    }
    return out;
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
    require_rank2(table, "embedding");
    const std::size_t vocab = table.rows(), d = table.cols();
    if (ids.empty()) throw ContractError("embedding: empty id sequence");
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw ContractError("embedding: id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(vocab));
        }
    }
    const std::size_t t = ids.size();
    std::vector<Scalar> r(t * d);
    const auto tv = table.values();
    for (std::size_t i = 0; i < t; ++i)
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, r.data() + i * d);
    const bool track = tracked({&table});
    Tensor out({t, d}, std::move(r), track);
    if (track) {
        std::vector<std::int32_t> id_copy(ids.begin(), ids.end());
        active_tape()->record({table}, out, [table, out, ids = std::move(id_copy), d]() mutable {
            const auto g = out.grad();
            auto gt = table.mutable_grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                Scalar* row = gt.data() + static_cast<std::size_t>(ids[i]) * d;
                for (std::size_t c = 0; c < d; ++c) row[c] += g[i * d + c];
            }
        });
    }
    return out;
}

Tensor sparse_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, std::int32_t ignore_id) {
    require_rank2(logits, "sparse_cross_entropy");
    const std::size_t t = logits.rows(), vocab = logits.cols();
    if (targets.size() != t) {
        throw ShapeError("sparse_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_to_string(logits.shape()));
    }
    const auto lv = logits.values();
    double total = 0.0;
    std::vector<double> lse(t, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        const auto target = targets[i];
        if (target == ignore_id) continue;
        if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
            throw ContractError("sparse_cross_entropy: target " + std::to_string(target) + " outside vocabulary of " +
                                std::to_string(vocab));
        }
        const Scalar* row = lv.data() + i * vocab;
        Scalar mx = row[0];
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
        lse[i] = static_cast<double>(mx) + std::log(denom);
        total += lse[i] - static_cast<double>(row[static_cast<std::size_t>(target)]);
    }
    const bool track = tracked({&logits});
    Tensor out({1}, {static_cast<Scalar>(total)}, track);
    if (track) {
        std::vector<std::int32_t> tgt(targets.begin(), targets.end());
        active_tape()->record(
            {logits}, out, [logits, out, tgt = std::move(tgt), lse = std::move(lse), vocab, ignore_id]() mutable {
                const double g = out.grad()[0];
                const auto lv = logits.values();
                auto gl = logits.mutable_grad();
                for (std::size_t i = 0; i < tgt.size(); ++i) {
                    if (tgt[i] == ignore_id) continue;
                    for (std::size_t j = 0; j < vocab; ++j) {
                        const double p = std::exp(static_cast<double>(lv[i * vocab + j]) - lse[i]);
                        const double onehot = (static_cast<std::int32_t>(j) == tgt[i]) ? 1.0 : 0.0;
                        gl[i * vocab + j] += static_cast<Scalar>(g * (p - onehot));
                    }
                }
            });
    }
    return out;
}

Tensor dropout(const Tensor& a, Scalar rate, Rng& rng) {
    if (rate <= Scalar(0)) return a;
    if (rate >= Scalar(1)) throw ContractError("dropout rate must be below 1");
    const Scalar keep_scale = Scalar(1) / (Scalar(1) - rate);
    std::vector<Scalar> mask(a.size());
    for (auto& m : mask) m = rng.uniform() >= static_cast<double>(rate) ? keep_scale : Scalar(0);
    return mul(a, Tensor(a.shape(), std::move(mask)));
}

bool all_finite(const Tensor& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](Scalar v) { return std::isfinite(v); });
}

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
