#include "swm/autodiff.hpp"

#include <cmath>

namespace swm {

namespace o = ops;

Val Tape::put(Tensor value) {
    nodes_.push_back(Node{std::move(value), nullptr});
    return Val{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Val Tape::emit(Tensor value, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), std::move(backward)});
    return Val{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::set_backward(Val v, BackwardFn backward) {
    nodes_[static_cast<std::size_t>(v.id)].backward = std::move(backward);
}

const Tensor& Tape::value(Val v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw StateError("tape: invalid value handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

void Tape::add_grad(std::int32_t id, const Tensor& g) {
    Tensor& slot = grads_[static_cast<std::size_t>(id)];
    if (slot.empty() && slot.rank() == 0) {
        slot = g;
        return;
    }
    if (!slot.same_shape(g)) {
        throw ShapeError("tape: gradient shape " + shape_str(g.shape()) + " vs value " +
                         shape_str(slot.shape()));
    }
    real* pd = slot.data();
    const real* pg = g.data();
    for (std::int64_t i = 0; i < g.size(); ++i) pd[i] += pg[i];
}

void Tape::backward(Val root) {
    const Tensor& rv = value(root);
    if (rv.size() != 1) throw ShapeError("tape backward: root must be scalar, got " + shape_str(rv.shape()));
    grads_.assign(nodes_.size(), Tensor{});
    add_grad(root.id, Tensor::full(rv.shape(), real(1)));
    for (std::int32_t id = root.id; id >= 0; --id) {
        const Tensor& g = grads_[static_cast<std::size_t>(id)];
        if (g.rank() == 0 && g.empty()) continue;
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (node.backward) node.backward(*this, g);
    }
}

Tensor Tape::grad(Val v) const {
    const Tensor& val = value(v);
    if (grads_.size() != nodes_.size()) return Tensor::zeros(val.shape());
    const Tensor& g = grads_[static_cast<std::size_t>(v.id)];
    if (g.rank() == 0 && g.empty()) return Tensor::zeros(val.shape());
    return g;
}

// ---- primitives ----

Val add(Tape& t, Val a, Val b) {
    return t.emit(o::add(t.value(a), t.value(b)), [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, g);
        t.add_grad(ib, g);
    });
}

Val sub(Tape& t, Val a, Val b) {
    return t.emit(o::sub(t.value(a), t.value(b)), [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, g);
        t.add_grad(ib, o::neg(g));
    });
}

Val mul(Tape& t, Val a, Val b) {
    return t.emit(o::mul(t.value(a), t.value(b)), [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, o::mul(g, t.value(Val{ib})));
        t.add_grad(ib, o::mul(g, t.value(Val{ia})));
    });
}

Val neg(Tape& t, Val a) {
    return t.emit(o::neg(t.value(a)),
                  [ia = a.id](Tape& t, const Tensor& g) { t.add_grad(ia, o::neg(g)); });
}

Val scale(Tape& t, Val a, real s) {
    return t.emit(o::scale(t.value(a), s),
                  [ia = a.id, s](Tape& t, const Tensor& g) { t.add_grad(ia, o::scale(g, s)); });
}

Val exp(Tape& t, Val a) {
    Val out = t.emit(o::exp(t.value(a)), nullptr);
    t.set_backward(out, [ia = a.id, iy = out.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, o::mul(g, t.value(Val{iy})));
    });
    return out;
}

Val log(Tape& t, Val a) {
    return t.emit(o::log(t.value(a)), [ia = a.id](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(Val{ia});
        Tensor dx = Tensor::zeros(x.shape());
        for (std::int64_t i = 0; i < x.size(); ++i) dx[i] = g[i] / x[i];
        t.add_grad(ia, dx);
    });
}

Val abs(Tape& t, Val a) {
    return t.emit(o::abs(t.value(a)), [ia = a.id](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(Val{ia});
        Tensor dx = Tensor::zeros(x.shape());
        for (std::int64_t i = 0; i < x.size(); ++i) dx[i] = x[i] < 0 ? -g[i] : g[i];
        t.add_grad(ia, dx);
    });
}

Val silu(Tape& t, Val a) {
    return t.emit(o::silu(t.value(a)), [ia = a.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, o::mul(g, o::silu_grad(t.value(Val{ia}))));
    });
}

Val gelu(Tape& t, Val a) {
    return t.emit(o::gelu(t.value(a)), [ia = a.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, o::mul(g, o::gelu_grad(t.value(Val{ia}))));
    });
}

Val softplus(Tape& t, Val a) {
    return t.emit(o::softplus(t.value(a)), [ia = a.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, o::mul(g, o::softplus_grad(t.value(Val{ia}))));
    });
}

Val matmul(Tape& t, Val a, Val b) {
    return t.emit(o::matmul(t.value(a), t.value(b)), [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, o::matmul_nt(g, t.value(Val{ib})));
        t.add_grad(ib, o::matmul_tn(t.value(Val{ia}), g));
    });
}

Val transpose(Tape& t, Val a) {
    return t.emit(o::transpose(t.value(a)),
                  [ia = a.id](Tape& t, const Tensor& g) { t.add_grad(ia, o::transpose(g)); });
}

Val add_rowvec(Tape& t, Val x, Val b) {
    return t.emit(o::add_rowvec(t.value(x), t.value(b)),
                  [ix = x.id, ib = b.id](Tape& t, const Tensor& g) {
                      t.add_grad(ix, g);
                      t.add_grad(ib, o::sum_rows(g));
                  });
}

Val outer(Tape& t, Val u, Val v) {
    return t.emit(o::outer(t.value(u), t.value(v)), [iu = u.id, iv = v.id](Tape& t, const Tensor& g) {
        t.add_grad(iu, o::matvec(g, t.value(Val{iv})));
        t.add_grad(iv, o::vecmat(t.value(Val{iu}), g));
    });
}

Val matvec(Tape& t, Val m, Val v) {
    return t.emit(o::matvec(t.value(m), t.value(v)), [im = m.id, iv = v.id](Tape& t, const Tensor& g) {
        t.add_grad(im, o::outer(g, t.value(Val{iv})));
        t.add_grad(iv, o::vecmat(g, t.value(Val{im})));
    });
}

Val mul_colvec(Tape& t, Val m, Val v) {
    return t.emit(o::mul_colvec(t.value(m), t.value(v)),
                  [im = m.id, iv = v.id](Tape& t, const Tensor& g) {
                      t.add_grad(im, o::mul_colvec(g, t.value(Val{iv})));
                      const Tensor& mm = t.value(Val{im});
                      const std::int64_t r = mm.extent(0), c = mm.extent(1);
                      Tensor dv = Tensor::zeros({r});
                      for (std::int64_t i = 0; i < r; ++i) {
                          real acc = 0;
                          for (std::int64_t j = 0; j < c; ++j) acc += g.at(i, j) * mm.at(i, j);
                          dv[i] = acc;
                      }
                      t.add_grad(iv, dv);
                  });
}

Val dot(Tape& t, Val a, Val b) {
    return t.emit(Tensor::scalar(o::dot(t.value(a), t.value(b))),
                  [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
                      t.add_grad(ia, o::scale(t.value(Val{ib}), g[0]));
                      t.add_grad(ib, o::scale(t.value(Val{ia}), g[0]));
                  });
}

Val scale_by(Tape& t, Val x, Val s) {
    const Tensor& sv = t.value(s);
    if (sv.size() != 1) throw ShapeError("scale_by: scalar expected, got " + shape_str(sv.shape()));
    return t.emit(o::scale(t.value(x), sv[0]), [ix = x.id, is = s.id](Tape& t, const Tensor& g) {
        t.add_grad(ix, o::scale(g, t.value(Val{is})[0]));
        t.add_grad(is, Tensor::scalar(o::dot(g, t.value(Val{ix}))));
    });
}

Val rsqrt(Tape& t, Val s) {
    const Tensor& x = t.value(s);
    Tensor y = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] = real(1) / std::sqrt(x[i]);
    return t.emit(std::move(y), [is = s.id](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(Val{is});
        Tensor dx = Tensor::zeros(x.shape());
        for (std::int64_t i = 0; i < x.size(); ++i) {
            dx[i] = real(-0.5) * g[i] / (x[i] * std::sqrt(x[i]));
        }
        t.add_grad(is, dx);
    });
}

Val sum(Tape& t, Val a) {
    return t.emit(Tensor::scalar(o::sum(t.value(a))), [ia = a.id](Tape& t, const Tensor& g) {
        t.add_grad(ia, Tensor::full(t.value(Val{ia}).shape(), g[0]));
    });
}

Val mean(Tape& t, Val a) {
    const auto n = t.value(a).size();
    return t.emit(Tensor::scalar(o::sum(t.value(a)) / real(n)), [ia = a.id, n](Tape& t, const Tensor& g) {
        t.add_grad(ia, Tensor::full(t.value(Val{ia}).shape(), g[0] / real(n)));
    });
}

Val sum_rows(Tape& t, Val x) {
    return t.emit(o::sum_rows(t.value(x)), [ix = x.id](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(Val{ix});
        Tensor dx = Tensor::zeros(xv.shape());
        const std::int64_t s = xv.extent(0), d = xv.extent(1);
        for (std::int64_t i = 0; i < s; ++i)
            for (std::int64_t j = 0; j < d; ++j) dx.at(i, j) = g[j];
        t.add_grad(ix, dx);
    });
}

Val mean_rows(Tape& t, Val x) {
    const auto s = t.value(x).extent(0);
    Val total = sum_rows(t, x);
    return scale(t, total, real(1) / real(s));
}

Val concat_rows(Tape& t, std::span<const Val> parts) {
    std::vector<Tensor> vals;
    vals.reserve(parts.size());
    std::vector<std::int32_t> ids;
    std::vector<std::int64_t> counts;
    for (auto p : parts) {
        vals.push_back(t.value(p));
        ids.push_back(p.id);
        counts.push_back(t.value(p).extent(0));
    }
    return t.emit(o::concat_rows(vals), [ids, counts](Tape& t, const Tensor& g) {
        std::int64_t off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            t.add_grad(ids[i], o::slice_rows(g, off, off + counts[i]));
            off += counts[i];
        }
    });
}

Val concat_cols(Tape& t, std::span<const Val> parts) {
    std::vector<Tensor> vals;
    std::vector<std::int32_t> ids;
    std::vector<std::int64_t> widths;
    for (auto p : parts) {
        vals.push_back(t.value(p));
        ids.push_back(p.id);
        widths.push_back(t.value(p).extent(1));
    }
    return t.emit(o::concat_cols(vals), [ids, widths](Tape& t, const Tensor& g) {
        std::int64_t off = 0;
        const std::int64_t s = g.extent(0);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            Tensor part = Tensor::zeros({s, widths[i]});
            for (std::int64_t r = 0; r < s; ++r)
                for (std::int64_t c = 0; c < widths[i]; ++c) part.at(r, c) = g.at(r, off + c);
            t.add_grad(ids[i], part);
            off += widths[i];
        }
    });
}

Val slice_rows(Tape& t, Val x, std::int64_t r0, std::int64_t r1) {
    return t.emit(o::slice_rows(t.value(x), r0, r1), [ix = x.id, r0](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(Val{ix});
        Tensor dx = Tensor::zeros(xv.shape());
        const std::int64_t d = xv.extent(1);
        for (std::int64_t i = 0; i < g.extent(0); ++i)
            for (std::int64_t j = 0; j < d; ++j) dx.at(r0 + i, j) = g.at(i, j);
        t.add_grad(ix, dx);
    });
}

Val slice_elems(Tape& t, Val x, std::int64_t i0, std::int64_t i1) {
    return t.emit(o::slice_elems(t.value(x), i0, i1), [ix = x.id, i0](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(Val{ix});
        Tensor dx = Tensor::zeros(xv.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) dx[i0 + i] = g[i];
        t.add_grad(ix, dx);
    });
}

Val row(Tape& t, Val x, std::int64_t r) {
    return t.emit(o::row(t.value(x), r), [ix = x.id, r](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(Val{ix});
        Tensor dx = Tensor::zeros(xv.shape());
        const std::int64_t d = xv.extent(1);
        for (std::int64_t j = 0; j < d; ++j) dx.at(r, j) = g[j];
        t.add_grad(ix, dx);
    });
}

Val stack_rows(Tape& t, std::span<const Val> rows) {
    std::vector<Tensor> vals;
    std::vector<std::int32_t> ids;
    for (auto r : rows) {
        vals.push_back(t.value(r));
        ids.push_back(r.id);
    }
    return t.emit(o::stack_rows(vals), [ids](Tape& t, const Tensor& g) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            t.add_grad(ids[i], o::row(g, static_cast<std::int64_t>(i)));
        }
    });
}

Val reshape(Tape& t, Val x, Shape shape) {
    return t.emit(o::reshape(t.value(x), shape), [ix = x.id](Tape& t, const Tensor& g) {
        t.add_grad(ix, o::reshape(g, t.value(Val{ix}).shape()));
    });
}

Val layer_norm(Tape& t, Val x, Val gamma, Val beta, real eps) {
    return t.emit(o::layer_norm(t.value(x), t.value(gamma), t.value(beta), eps),
                  [ix = x.id, ig = gamma.id, ib = beta.id, eps](Tape& t, const Tensor& g) {
                      const Tensor& xv = t.value(Val{ix});
                      const Tensor& gv = t.value(Val{ig});
                      const std::int64_t s = xv.extent(0), d = xv.extent(1);
                      Tensor dx = Tensor::zeros(xv.shape());
                      Tensor dgamma = Tensor::zeros(gv.shape());
                      Tensor dbeta = Tensor::zeros(gv.shape());
                      for (std::int64_t i = 0; i < s; ++i) {
                          real mean = 0;
                          for (std::int64_t j = 0; j < d; ++j) mean += xv.at(i, j);
                          mean /= real(d);
                          real var = 0;
                          for (std::int64_t j = 0; j < d; ++j) {
                              const real c = xv.at(i, j) - mean;
                              var += c * c;
                          }
                          var /= real(d);
                          const real inv = real(1) / std::sqrt(var + eps);
                          // xhat and the two row means the VJP needs
                          real m1 = 0, m2 = 0;
                          std::vector<real> xhat(static_cast<std::size_t>(d));
                          std::vector<real> dxh(static_cast<std::size_t>(d));
                          for (std::int64_t j = 0; j < d; ++j) {
                              xhat[static_cast<std::size_t>(j)] = (xv.at(i, j) - mean) * inv;
                              dxh[static_cast<std::size_t>(j)] = g.at(i, j) * gv[j];
                              m1 += dxh[static_cast<std::size_t>(j)];
                              m2 += dxh[static_cast<std::size_t>(j)] * xhat[static_cast<std::size_t>(j)];
                          }
                          m1 /= real(d);
                          m2 /= real(d);
                          for (std::int64_t j = 0; j < d; ++j) {
                              dx.at(i, j) = inv * (dxh[static_cast<std::size_t>(j)] - m1 -
                                                   xhat[static_cast<std::size_t>(j)] * m2);
                              dgamma[j] += g.at(i, j) * xhat[static_cast<std::size_t>(j)];
                              dbeta[j] += g.at(i, j);
                          }
                      }
                      t.add_grad(ix, dx);
                      t.add_grad(ig, dgamma);
                      t.add_grad(ib, dbeta);
                  });
}

Val depthwise_conv1d_causal(Tape& t, Val x, Val kernel, Val bias) {
    return t.emit(o::depthwise_conv1d_causal(t.value(x), t.value(kernel), t.value(bias)),
                  [ix = x.id, ik = kernel.id, ib = bias.id](Tape& t, const Tensor& g) {
                      const Tensor& xv = t.value(Val{ix});
                      const Tensor& kv = t.value(Val{ik});
                      const std::int64_t s = xv.extent(0), d = xv.extent(1), k = kv.extent(0);
                      Tensor dx = Tensor::zeros(xv.shape());
                      Tensor dk = Tensor::zeros(kv.shape());
                      Tensor db = Tensor::zeros({d});
                      for (std::int64_t tt = 0; tt < s; ++tt) {
                          for (std::int64_t c = 0; c < d; ++c) {
                              const real go = g.at(tt, c);
                              db[c] += go;
                              for (std::int64_t j = 0; j < k; ++j) {
                                  const std::int64_t src = tt - (k - 1) + j;
                                  if (src >= 0) {
                                      dx.at(src, c) += kv.at(j, c) * go;
                                      dk.at(j, c) += xv.at(src, c) * go;
                                  }
                              }
                          }
                      }
                      t.add_grad(ix, dx);
                      t.add_grad(ik, dk);
                      t.add_grad(ib, db);
                  });
}

Val softmax_rows(Tape& t, Val x) {
    Val out = t.emit(o::softmax_rows(t.value(x)), nullptr);
    t.set_backward(out, [ix = x.id, iy = out.id](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(Val{iy});
        const std::int64_t s = y.extent(0), d = y.extent(1);
        Tensor dx = Tensor::zeros(y.shape());
        for (std::int64_t i = 0; i < s; ++i) {
            real gy = 0;
            for (std::int64_t j = 0; j < d; ++j) gy += g.at(i, j) * y.at(i, j);
            for (std::int64_t j = 0; j < d; ++j) dx.at(i, j) = y.at(i, j) * (g.at(i, j) - gy);
        }
        t.add_grad(ix, dx);
    });
    return out;
}

Val linear(Tape& t, Val x, Val w, Val b) { return add_rowvec(t, matmul(t, x, w), b); }

Val softmax_attention(Tape& t, Val q, Val k, Val v) {
    const Tensor& kv = t.value(k);
    if (kv.extent(0) == 0) throw EmptyContextError("softmax_attention: empty key/value context");
    const Tensor& qv = t.value(q);
    if (qv.extent(1) != kv.extent(1)) {
        throw ShapeError("softmax_attention: q/k dim mismatch " + shape_str(qv.shape()) + " vs " +
                         shape_str(kv.shape()));
    }
    const real inv_sqrt_dk = real(1) / std::sqrt(real(qv.extent(1)));
    Val logits = scale(t, matmul(t, q, transpose(t, k)), inv_sqrt_dk);
    return matmul(t, softmax_rows(t, logits), v);
}

}  // namespace swm
