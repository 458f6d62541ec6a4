#include "lwpk/fscil.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/random.hpp"

namespace lwpk {

std::size_t ClassifierHead::installed_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(source.begin(), source.end(), [](RowSource s) { return s != RowSource::uninstalled; }));
}

ClassifierHead make_head(std::size_t classes, std::size_t dim) {
    return {Matrix(classes, dim), std::vector<RowSource>(classes, RowSource::uninstalled)};
}

WeightedLoss weighted_cross_entropy(const Matrix& logits, std::span<const int> targets,
                                    std::span<const double> weights) {
    const std::size_t batch = logits.rows();
    const std::size_t classes = logits.cols();
    if (targets.size() != batch || weights.size() != batch) {
        throw ShapeMismatch("weighted_cross_entropy: need one target and one weight per sample");
    }
    if (batch == 0) return {0.0, Matrix(0, classes)};

    WeightedLoss out{0.0, Matrix(batch, classes)};
    std::vector<double> e(classes);
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t s = 0; s < batch; ++s) {
        const int t = targets[s];
        if (t < 0 || static_cast<std::size_t>(t) >= classes) {
            throw ShapeMismatch("weighted_cross_entropy: target " + std::to_string(t) + " is not an installed class");
        }
        const auto row = logits.row(s);
        const double mx = *std::max_element(row.begin(), row.end());
        for (std::size_t c = 0; c < classes; ++c) e[c] = std::exp(row[c] - mx);
        const double sum = order_invariant_sum(e);
        const double lse = mx + std::log(sum);
        out.loss += weights[s] * (lse - row[static_cast<std::size_t>(t)]);
        auto g = out.grad.row(s);
        for (std::size_t c = 0; c < classes; ++c) {
            g[c] = weights[s] * (e[c] / sum - (c == static_cast<std::size_t>(t) ? 1.0 : 0.0)) * inv_batch;
        }
    }
    out.loss *= inv_batch;
    return out;
}

namespace {

Matrix linear_logits(const Matrix& emb, const Matrix& weights) {
    Matrix out(emb.rows(), weights.rows());
    for (std::size_t b = 0; b < emb.rows(); ++b)
        for (std::size_t c = 0; c < weights.rows(); ++c) out(b, c) = dot(weights.row(c), emb.row(b));
    return out;
}

// d loss / d emb = dlogits * W, reduced over classes in an order-invariant way.
Matrix embedding_grad(const Matrix& dlogits, const Matrix& weights) {
    Matrix out(dlogits.rows(), weights.cols());
    std::vector<double> terms(weights.rows());
    for (std::size_t b = 0; b < dlogits.rows(); ++b) {
        for (std::size_t k = 0; k < weights.cols(); ++k) {
            for (std::size_t c = 0; c < weights.rows(); ++c) terms[c] = dlogits(b, c) * weights(c, k);
            out(b, k) = order_invariant_sum(terms);
        }
    }
    return out;
}

void add_head_grad(Matrix& dw, const Matrix& dlogits, const Matrix& emb) {
    for (std::size_t b = 0; b < emb.rows(); ++b) {
        for (std::size_t c = 0; c < dw.rows(); ++c) {
            const double g = dlogits(b, c);
            auto row = dw.row(c);
            const auto e = emb.row(b);
            for (std::size_t k = 0; k < row.size(); ++k) row[k] += g * e[k];
        }
    }
}

void add_into(EncoderParams& acc, const EncoderParams& g) {
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        auto& a = acc.layers[l];
        const auto& b = g.layers[l];
        for (std::size_t i = 0; i < a.weight.size(); ++i) a.weight.flat()[i] += b.weight.flat()[i];
        for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
    }
}

Matrix gather(std::span<const Example> examples, std::span<const std::size_t> idx) {
    Matrix x(idx.size(), examples.empty() ? 0 : examples.front().features.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto& f = examples[idx[b]].features;
        if (f.size() != x.cols()) throw ShapeMismatch("inconsistent feature dimension");
        std::copy(f.begin(), f.end(), x.row(b).begin());
    }
    return x;
}

double cosine_guarded(std::span<const double> w, std::span<const double> z_unit) {
    const double n = norm2(w);
    if (n < kNormGuard) return 0.0;
    return dot(w, z_unit) / n;
}

}  // namespace

PretrainResult joint_pretrain(std::span<const Example> base, const PseudoLabeledSet& pseudo, int total_classes,
                              const EncoderConfig& encoder, const PretrainConfig& config) {
    if (base.empty()) throw ProtocolInfeasible("joint_pretrain: empty base set");
    if (config.omega < 0.0) throw ShapeMismatch("joint_pretrain: omega must be >= 0");
    if (config.batch_size < 1) throw ShapeMismatch("joint_pretrain: batch size must be >= 1");

    int base_max = -1;
    for (const auto& ex : base) {
        if (!ex.label) throw ProtocolInfeasible("joint_pretrain: unlabeled base example");
        base_max = std::max(base_max, *ex.label);
    }
    for (const auto& ex : pseudo.examples) {
        const int p = ex.label.value_or(-1);
        if (p <= base_max || p < pseudo.label_base) {
            throw ProtocolInfeasible("joint_pretrain: pseudo-label " + std::to_string(p) +
                                     " collides with the base label range");
        }
        if (p >= total_classes) throw ProtocolInfeasible("joint_pretrain: pseudo-label beyond head size");
    }
    if (base_max >= total_classes) throw ProtocolInfeasible("joint_pretrain: base label beyond head size");

    PretrainResult result;
    result.encoder = init_params(encoder.dims, derive_seed(config.seed, "pretrain.init"), encoder.activation);
    result.head = make_head(static_cast<std::size_t>(total_classes), result.encoder.output_dim());
    auto opt = make_optimizer(result.encoder, config.learning_rate, config.momentum);
    Matrix head_buffer(result.head.weights.rows(), result.head.weights.cols());

    const std::vector<int> base_targets = labels_of(base);
    const std::vector<int> pseudo_targets = labels_of(pseudo.examples);
    const std::size_t nb = base.size();
    const std::size_t np = pseudo.examples.size();
    const auto bs = static_cast<std::size_t>(config.batch_size);
    const std::size_t steps = (nb + bs - 1) / bs;
    const std::size_t per_step_pseudo = (np + steps - 1) / steps;

    std::vector<std::size_t> base_order(nb), pseudo_order(np);
    std::iota(base_order.begin(), base_order.end(), std::size_t{0});
    std::iota(pseudo_order.begin(), pseudo_order.end(), std::size_t{0});
    Rng base_rng(derive_seed(config.seed, "pretrain.base"));
    Rng pseudo_rng(derive_seed(config.seed, "pretrain.pseudo"));

    struct ChunkGrad {
        double loss;
        EncoderParams encoder;
        Matrix head;
    };
    auto chunk = [&](std::span<const Example> examples, std::span<const int> targets,
                     std::span<const std::size_t> idx, double weight) {
        const Matrix x = gather(examples, idx);
        const auto emb = forward(result.encoder, x, false);
        const Matrix logits = linear_logits(emb.values, result.head.weights);
        std::vector<int> t(idx.size());
        for (std::size_t b = 0; b < idx.size(); ++b) t[b] = targets[idx[b]];
        const std::vector<double> w(idx.size(), weight);
        const auto ce = weighted_cross_entropy(logits, t, w);
        ChunkGrad g{ce.loss, {}, Matrix(result.head.weights.rows(), result.head.weights.cols())};
        add_head_grad(g.head, ce.grad, emb.values);
        g.encoder = backward(result.encoder, x, embedding_grad(ce.grad, result.head.weights), GradientAt::raw_output)
                        .params;
        return g;
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        base_rng.shuffle(base_order);
        pseudo_rng.shuffle(pseudo_order);
        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            const std::size_t b0 = s * bs, b1 = std::min(nb, b0 + bs);
            auto g = chunk(base, base_targets, std::span(base_order).subspan(b0, b1 - b0), 1.0);
            double loss = g.loss;
            const std::size_t p0 = std::min(np, s * per_step_pseudo);
            const std::size_t p1 = std::min(np, p0 + per_step_pseudo);
            if (p1 > p0) {
                const auto gp = chunk(pseudo.examples, pseudo_targets, std::span(pseudo_order).subspan(p0, p1 - p0),
                                      config.omega);
                loss += gp.loss;
                add_into(g.encoder, gp.encoder);
                for (std::size_t i = 0; i < g.head.size(); ++i) g.head.flat()[i] += gp.head.flat()[i];
            }
            for (double v : g.head.flat()) {
                if (!std::isfinite(v)) throw PoisonedStep("joint_pretrain: non-finite head gradient");
            }
            sgd_step(result.encoder, g.encoder, opt);
            sgd_step(result.head.weights.flat(), g.head.flat(), head_buffer.flat(), config.learning_rate,
                     config.momentum);
            epoch_loss += loss;
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(steps));
    }

    for (int c = 0; c <= base_max; ++c) result.head.source[static_cast<std::size_t>(c)] = RowSource::trained;
    return result;
}

Prototype compute_prototype(const EncoderParams& encoder, std::span<const Example> examples) {
    if (examples.empty()) throw ShapeMismatch("compute_prototype: no examples");
    const auto id = examples.front().label;
    if (!id) throw ShapeMismatch("compute_prototype: unlabeled example");
    for (const auto& ex : examples) {
        if (ex.label != id) throw ShapeMismatch("compute_prototype: mixed class ids");
    }
    const auto emb = forward(encoder, feature_matrix(examples), false);
    Prototype p{*id, std::vector<double>(emb.values.cols(), 0.0), examples.size()};
    for (std::size_t b = 0; b < emb.values.rows(); ++b) {
        const auto row = emb.values.row(b);
        for (std::size_t k = 0; k < row.size(); ++k) p.mean[k] += row[k];
    }
    for (auto& v : p.mean) v /= static_cast<double>(examples.size());
    return p;
}

void replace_head_rows(ClassifierHead& head, std::span<const Prototype> prototypes) {
    for (const auto& p : prototypes) {
        if (p.class_id < 0 || static_cast<std::size_t>(p.class_id) >= head.classes()) {
            throw ShapeMismatch("replace_head_rows: class id " + std::to_string(p.class_id) + " outside head");
        }
        if (p.mean.size() != head.weights.cols()) throw ShapeMismatch("replace_head_rows: dimension mismatch");
        const auto c = static_cast<std::size_t>(p.class_id);
        std::copy(p.mean.begin(), p.mean.end(), head.weights.row(c).begin());
        head.source[c] = RowSource::prototype;
    }
}

int argmax(std::span<const double> values) {
    return static_cast<int>(std::distance(values.begin(), std::max_element(values.begin(), values.end())));
}

Matrix infer_batch(const EncoderParams& encoder, const ClassifierHead& head, const Matrix& inputs,
                   std::size_t seen_classes) {
    if (seen_classes == 0 || seen_classes > head.classes()) throw ShapeMismatch("infer: bad seen-class count");
    for (std::size_t c = 0; c < seen_classes; ++c) {
        if (head.source[c] == RowSource::uninstalled) {
            throw Error("infer: contract violation, class " + std::to_string(c) + " is in range but uninstalled");
        }
    }
    const auto z = forward(encoder, inputs, true);
    Matrix probs(inputs.rows(), seen_classes);
    std::vector<double> sims(seen_classes);
    for (std::size_t b = 0; b < inputs.rows(); ++b) {
        for (std::size_t c = 0; c < seen_classes; ++c) sims[c] = cosine_guarded(head.weights.row(c), z.values.row(b));
        const double mx = *std::max_element(sims.begin(), sims.end());
        auto p = probs.row(b);
        double sum = 0.0;
        for (std::size_t c = 0; c < seen_classes; ++c) {
            p[c] = std::exp(sims[c] - mx);
            sum += p[c];
        }
        for (auto& v : p) v /= sum;
    }
    return probs;
}

std::vector<double> infer(const EncoderParams& encoder, const ClassifierHead& head, std::span<const double> x,
                          std::size_t seen_classes) {
    Matrix in(1, x.size());
    std::copy(x.begin(), x.end(), in.row(0).begin());
    const Matrix p = infer_batch(encoder, head, in, seen_classes);
    return {p.row(0).begin(), p.row(0).end()};
}

namespace {

std::vector<Prototype> class_prototypes(const EncoderParams& encoder, std::span<const Example> examples) {
    std::map<int, std::vector<Example>> by_class;
    for (const auto& ex : examples) by_class[ex.label.value()].push_back(ex);
    std::vector<Prototype> out;
    for (const auto& [id, members] : by_class) out.push_back(compute_prototype(encoder, members));
    return out;
}

// Cross-entropy on cosine logits against the fixed installed rows.
void finetune_session(EncoderParams& encoder, const ClassifierHead& head, std::span<const Example> train,
                      std::size_t seen, const IncrementalConfig& config) {
    Matrix unit_rows(seen, head.weights.cols());
    for (std::size_t c = 0; c < seen; ++c) {
        const auto w = head.weights.row(c);
        const double n = norm2(w);
        if (n >= kNormGuard)
            for (std::size_t k = 0; k < w.size(); ++k) unit_rows(c, k) = w[k] / n;
    }
    auto opt = make_optimizer(encoder, config.finetune_lr, config.finetune_momentum);
    const Matrix x = feature_matrix(train);
    const std::vector<int> targets = labels_of(train);
    const std::vector<double> weights(train.size(), 1.0);
    for (int e = 0; e < config.finetune_epochs; ++e) {
        const auto z = forward(encoder, x, true);
        const auto ce = weighted_cross_entropy(linear_logits(z.values, unit_rows), targets, weights);
        const auto bw = backward(encoder, x, embedding_grad(ce.grad, unit_rows), GradientAt::normalized_output);
        sgd_step(encoder, bw.params, opt);
    }
}

std::vector<SessionPrediction> evaluate(const EncoderParams& encoder, const ClassifierHead& head,
                                        std::span<const Example> test, std::size_t seen) {
    const Matrix probs = infer_batch(encoder, head, feature_matrix(test), seen);
    std::vector<SessionPrediction> out;
    out.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto p = probs.row(i);
        const int pred = argmax(p);
        out.push_back({test[i].uid, test[i].label.value(), pred, p[static_cast<std::size_t>(pred)]});
    }
    return out;
}

}  // namespace

IncrementalRun run_incremental(const SessionStream& stream, const PretrainResult& pretrained,
                               const IncrementalConfig& config) {
    const auto& proto = stream.protocol;
    if (pretrained.head.classes() != static_cast<std::size_t>(proto.total_classes())) {
        throw ShapeMismatch("run_incremental: head has " + std::to_string(pretrained.head.classes()) +
                            " rows, stream has " + std::to_string(proto.total_classes()) + " classes");
    }
    if (pretrained.encoder.input_dim() != stream.dim) {
        throw ShapeMismatch("run_incremental: encoder input dim does not match stream");
    }

    IncrementalRun run{{}, {}, pretrained.encoder, pretrained.head};
    // Pseudo-class rows are never scored; they wait for their true session.
    for (int c = proto.base_classes; c < proto.total_classes(); ++c) {
        run.head.source[static_cast<std::size_t>(c)] = RowSource::uninstalled;
    }
    if (config.keep_trained_base_rows) {
        for (int c = 0; c < proto.base_classes; ++c) run.head.source[static_cast<std::size_t>(c)] = RowSource::trained;
    } else {
        replace_head_rows(run.head, class_prototypes(run.encoder, stream.base));
    }

    std::vector<double> accuracies;
    auto score = [&](int session) {
        const auto seen = static_cast<std::size_t>(proto.classes_seen(session));
        auto preds = evaluate(run.encoder, run.head, stream.tests[static_cast<std::size_t>(session)], seen);
        std::vector<int> predicted, truth;
        for (const auto& p : preds) {
            predicted.push_back(p.predicted);
            truth.push_back(p.truth);
        }
        accuracies.push_back(session_accuracy(predicted, truth));
        run.predictions.push_back(std::move(preds));
    };

    score(0);
    for (int s = 1; s <= proto.sessions; ++s) {
        const auto& train = stream.increments[static_cast<std::size_t>(s - 1)];
        replace_head_rows(run.head, class_prototypes(run.encoder, train));
        if (config.finetune) {
            finetune_session(run.encoder, run.head, train, static_cast<std::size_t>(proto.classes_seen(s)), config);
            replace_head_rows(run.head, class_prototypes(run.encoder, train));
        }
        score(s);
    }
    run.metrics = summarize(accuracies);
    return run;
}

std::string format_predictions(std::span<const SessionPrediction> predictions) {
    std::ostringstream out;
    out << "uid,true_label,predicted_label,max_probability\n";
    for (const auto& p : predictions) {
        out << p.uid << ',' << p.truth << ',' << p.predicted << ',' << format_double(p.max_probability) << '\n';
    }
    return out.str();
}

std::string format_head(const ClassifierHead& head) {
    std::ostringstream out;
    out << "lwpk-head 1\n" << head.classes() << ' ' << head.weights.cols() << '\n';
    for (std::size_t c = 0; c < head.classes(); ++c) {
        switch (head.source[c]) {
            case RowSource::uninstalled: out << "uninstalled"; break;
            case RowSource::trained: out << "trained"; break;
            case RowSource::prototype: out << "prototype"; break;
        }
        for (double v : head.weights.row(c)) out << ' ' << format_double(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace lwpk
