#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "causalgrid/common.hpp"
#include "causalgrid/rng.hpp"
#include "causalgrid/timeseries.hpp"

namespace causalgrid {

struct TreeNode {
    bool leaf = true;
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> row) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].leaf) {
            const TreeNode& n = nodes[static_cast<std::size_t>(i)];
            i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

struct Hyperparams {
    std::size_t n_trees = 200;
    int max_depth = 5;
    double learning_rate = 0.1;
    std::size_t min_leaf = 10;
    double row_subsample = 1.0;
    double feature_subsample = 1.0;
};

// Additive ensemble: prediction = base_score + eta * sum of tree outputs.
struct GbtModel {
    std::vector<RegressionTree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0;
    Hyperparams hp;
    std::vector<std::string> feature_names;
    bool degenerate_target = false;       // constant target; model is base score only
    std::vector<double> training_rss;     // training RSS after each tree

    double predict(std::span<const double> row) const {
        if (row.size() != feature_names.size())
            throw SchemaError("predict: feature count mismatch: got " + std::to_string(row.size()) +
                              ", trained on " + std::to_string(feature_names.size()));
        double p = base_score;
        for (const auto& t : trees) p += learning_rate * t.predict(row);
        return p;
    }
};

// Contiguous-block train/test assignment for time series.
struct BlockedSplit {
    std::size_t block_hours = 96;
    double test_frac = 0.2;
    std::uint64_t seed = 0;
    std::vector<bool> block_is_test;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
};

// Groups rows into contiguous blocks of `block_hours` and assigns
// round(test_frac * n_blocks) blocks to the test set, drawn uniformly
// without replacement.
inline BlockedSplit blocked_split(std::size_t n_rows, std::size_t block_hours = 96,
                                  double test_frac = 0.2, std::uint64_t seed = 0) {
    if (block_hours == 0) throw InvalidArgument("blocked_split: block_hours must be positive");
    if (n_rows < 2 * block_hours)
        throw InvalidArgument("blocked_split: frame shorter than two blocks");
    if (!(test_frac > 0.0) || !(test_frac < 1.0))
        throw InvalidArgument("blocked_split: test_frac must be in (0, 1)");
    std::size_t n_blocks = (n_rows + block_hours - 1) / block_hours;
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n_blocks)));

    BlockedSplit s;
    s.block_hours = block_hours;
    s.test_frac = test_frac;
    s.seed = seed;
    std::vector<std::size_t> order(n_blocks);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "gbt/blocked_split"));
    rng.shuffle(order);
    s.block_is_test.assign(n_blocks, false);
    for (std::size_t k = 0; k < n_test; ++k) s.block_is_test[order[k]] = true;
    for (std::size_t i = 0; i < n_rows; ++i) {
        if (s.block_is_test[i / block_hours])
            s.test_rows.push_back(i);
        else
            s.train_rows.push_back(i);
    }
    return s;
}

namespace detail {

// Row-major feature matrix view used by the trainer.
struct Matrix {
    std::vector<std::span<const double>> cols;
    std::size_t rows = 0;
    double at(std::size_t r, std::size_t c) const { return cols[c][r]; }
};

}  // namespace detail

// Squared-error gradient boosting with exact greedy splits: at each level
// every candidate split over sorted feature values is scored by variance
// reduction. Deterministic per seed; the RNG is not consulted at all when
// both subsample fractions are 1.
inline GbtModel train(const std::vector<std::span<const double>>& features,
                      std::span<const double> target,
                      const std::vector<std::string>& feature_names, const Hyperparams& hp,
                      std::uint64_t seed, const std::vector<std::size_t>& row_subset = {}) {
    const std::size_t n_feat = features.size();
    if (feature_names.size() != n_feat) throw InvalidArgument("train: feature name count mismatch");
    for (const auto& f : features)
        if (f.size() != target.size()) throw InvalidArgument("train: column length mismatch");
    if (hp.learning_rate <= 0.0 || hp.learning_rate > 1.0)
        throw InvalidArgument("train: learning rate must be in (0, 1]");

    std::vector<std::size_t> rows = row_subset;
    if (rows.empty()) {
        rows.resize(target.size());
        std::iota(rows.begin(), rows.end(), 0);
    }
    const std::size_t n = rows.size();
    if (n < 2 * hp.min_leaf) throw InvalidArgument("train: need at least 2 * min_leaf rows");

    GbtModel model;
    model.learning_rate = hp.learning_rate;
    model.hp = hp;
    model.feature_names = feature_names;
    double base = 0.0;
    for (std::size_t r : rows) base += target[r];
    base /= static_cast<double>(n);
    model.base_score = base;

    double tss = 0.0;
    for (std::size_t r : rows) tss += (target[r] - base) * (target[r] - base);
    if (!(tss > 0.0)) {
        model.degenerate_target = true;
        return model;
    }

    // Pre-sort each feature over the training rows once.
    std::vector<std::vector<std::size_t>> sorted(n_feat);
    for (std::size_t f = 0; f < n_feat; ++f) {
        sorted[f] = rows;
        std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](std::size_t a, std::size_t b) {
            return features[f][a] < features[f][b];
        });
    }

    std::vector<double> pred(target.size(), base);
    std::vector<double> residual(target.size(), 0.0);
    // node id per row for the tree under construction; -1 = inactive.
    std::vector<int> node_of(target.size(), -1);
    const bool subsampled = hp.row_subsample < 1.0 || hp.feature_subsample < 1.0;
    Rng rng(derive_seed(seed, "gbt/train"));

    struct Agg {
        std::size_t cnt = 0;
        double sum = 0.0;
    };
    struct Best {
        double gain = 0.0;
        int feature = -1;
        double threshold = 0.0;
    };

    for (std::size_t t = 0; t < hp.n_trees; ++t) {
        for (std::size_t r : rows) residual[r] = target[r] - pred[r];

        // Row / feature subsampling for this tree.
        std::vector<std::size_t> tree_feats(n_feat);
        std::iota(tree_feats.begin(), tree_feats.end(), 0);
        std::fill(node_of.begin(), node_of.end(), -1);
        if (subsampled) {
            std::size_t keep_rows = std::max<std::size_t>(
                2 * hp.min_leaf,
                static_cast<std::size_t>(std::llround(hp.row_subsample * static_cast<double>(n))));
            std::vector<std::size_t> shuffled = rows;
            rng.shuffle(shuffled);
            shuffled.resize(std::min(keep_rows, n));
            for (std::size_t r : shuffled) node_of[r] = 0;
            std::size_t keep_feats = std::max<std::size_t>(
                1, static_cast<std::size_t>(
                       std::llround(hp.feature_subsample * static_cast<double>(n_feat))));
            rng.shuffle(tree_feats);
            tree_feats.resize(keep_feats);
            std::sort(tree_feats.begin(), tree_feats.end());
        } else {
            for (std::size_t r : rows) node_of[r] = 0;
        }

        RegressionTree tree;
        tree.nodes.push_back({});
        std::vector<int> level = {0};
        std::vector<Agg> totals(1);
        for (std::size_t r : rows)
            if (node_of[r] == 0) {
                totals[0].cnt++;
                totals[0].sum += residual[r];
            }

        for (int depth = 0; depth < hp.max_depth && !level.empty(); ++depth) {
            std::size_t n_level = level.size();
            std::size_t level_base = tree.nodes.size() - n_level;
            std::vector<Best> best(n_level);
            std::vector<int> slot_of_node(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < n_level; ++s) slot_of_node[static_cast<std::size_t>(level[s])] = static_cast<int>(s);

            std::vector<Agg> seen(n_level);
            std::vector<double> last_val(n_level, 0.0);
            std::vector<bool> started(n_level, false);
            for (std::size_t f : tree_feats) {
                std::fill(seen.begin(), seen.end(), Agg{});
                std::fill(started.begin(), started.end(), false);
                for (std::size_t r : sorted[f]) {
                    int nd = node_of[r];
                    if (nd < 0 || slot_of_node[static_cast<std::size_t>(nd)] < 0) continue;
                    std::size_t s = static_cast<std::size_t>(slot_of_node[static_cast<std::size_t>(nd)]);
                    double v = features[f][r];
                    const Agg& tot = totals[static_cast<std::size_t>(nd) - level_base];
                    if (started[s] && v != last_val[s] && seen[s].cnt >= hp.min_leaf &&
                        tot.cnt - seen[s].cnt >= hp.min_leaf) {
                        double nl = static_cast<double>(seen[s].cnt);
                        double nr = static_cast<double>(tot.cnt - seen[s].cnt);
                        double sl = seen[s].sum;
                        double sr = tot.sum - sl;
                        double gain = sl * sl / nl + sr * sr / nr - tot.sum * tot.sum / (nl + nr);
                        if (gain > best[s].gain + 1e-12) {
                            best[s].gain = gain;
                            best[s].feature = static_cast<int>(f);
                            best[s].threshold = 0.5 * (last_val[s] + v);
                        }
                    }
                    seen[s].cnt++;
                    seen[s].sum += residual[r];
                    last_val[s] = v;
                    started[s] = true;
                }
            }

            // Materialize the chosen splits and reassign rows.
            std::vector<int> next_level;
            std::vector<Agg> next_totals;
            std::vector<int> left_of(n_level, -1);
            for (std::size_t s = 0; s < n_level; ++s) {
                int nd = level[s];
                const Agg tot = totals[static_cast<std::size_t>(nd) - level_base];
                if (best[s].feature < 0) {
                    tree.nodes[static_cast<std::size_t>(nd)].leaf = true;
                    tree.nodes[static_cast<std::size_t>(nd)].value =
                        tot.sum / static_cast<double>(tot.cnt);
                    continue;
                }
                int left = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                TreeNode& node = tree.nodes[static_cast<std::size_t>(nd)];
                node.leaf = false;
                node.feature = best[s].feature;
                node.threshold = best[s].threshold;
                node.left = left;
                node.right = left + 1;
                left_of[s] = left;
                next_level.push_back(left);
                next_level.push_back(left + 1);
                next_totals.push_back({});
                next_totals.push_back({});
            }
            // next_totals is indexed relative to the first node of the new level.
            int first_new = next_level.empty() ? 0 : next_level.front();
            for (std::size_t r : rows) {
                int nd = node_of[r];
                if (nd < 0) continue;
                int slot = slot_of_node[static_cast<std::size_t>(nd)];
                if (slot < 0 || left_of[static_cast<std::size_t>(slot)] < 0) continue;
                const TreeNode& node = tree.nodes[static_cast<std::size_t>(nd)];
                int child = features[static_cast<std::size_t>(node.feature)][r] <= node.threshold
                                ? node.left
                                : node.right;
                node_of[r] = child;
                Agg& a = next_totals[static_cast<std::size_t>(child - first_new)];
                a.cnt++;
                a.sum += residual[r];
            }
            // Rows whose node stayed a leaf become inactive for deeper levels.
            for (std::size_t r : rows) {
                int nd = node_of[r];
                if (nd >= 0 && slot_of_node.size() > static_cast<std::size_t>(nd) &&
                    slot_of_node[static_cast<std::size_t>(nd)] >= 0 &&
                    left_of[static_cast<std::size_t>(slot_of_node[static_cast<std::size_t>(nd)])] < 0)
                    node_of[r] = -1;
            }
            level = std::move(next_level);
            totals = std::move(next_totals);
        }
        // Any still-open nodes at max depth become leaves.
        int first_open = level.empty() ? 0 : level.front();
        for (std::size_t s = 0; s < level.size(); ++s) {
            TreeNode& node = tree.nodes[static_cast<std::size_t>(level[s])];
            node.leaf = true;
            const Agg& tot = totals[static_cast<std::size_t>(level[s] - first_open)];
            node.value = tot.cnt > 0 ? tot.sum / static_cast<double>(tot.cnt) : 0.0;
        }

        double rss = 0.0;
        std::vector<double> rowbuf(n_feat);
        for (std::size_t r : rows) {
            for (std::size_t f = 0; f < n_feat; ++f) rowbuf[f] = features[f][r];
            pred[r] += hp.learning_rate * tree.predict(rowbuf);
            rss += (target[r] - pred[r]) * (target[r] - pred[r]);
        }
        model.trees.push_back(std::move(tree));
        model.training_rss.push_back(rss);
    }
    return model;
}

struct Metrics {
    double r2 = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    double mean_label = 0.0;
    std::size_t n = 0;
};

// Standard regression metrics over the rows whose timestamps fall inside
// [from, to); pass nullopt bounds for the full frame.
inline Metrics evaluate(const GbtModel& model, const FeatureFrame& frame, const std::string& target,
                        const std::vector<std::size_t>& row_subset = {},
                        std::optional<Instant> from = std::nullopt,
                        std::optional<Instant> to = std::nullopt) {
    std::vector<std::span<const double>> cols;
    for (const auto& name : model.feature_names) cols.push_back(frame.values(name));
    auto ys = frame.values(target);

    std::vector<std::size_t> rows = row_subset;
    if (rows.empty()) {
        rows.resize(frame.n_rows());
        std::iota(rows.begin(), rows.end(), 0);
    }
    std::vector<double> obs, preds;
    std::vector<double> rowbuf(cols.size());
    for (std::size_t r : rows) {
        Instant t = frame.timestamps[r];
        if ((from && t < *from) || (to && t >= *to)) continue;
        for (std::size_t f = 0; f < cols.size(); ++f) rowbuf[f] = cols[f][r];
        obs.push_back(ys[r]);
        preds.push_back(model.predict(rowbuf));
    }
    if (obs.size() < 2) throw InvalidArgument("evaluate: fewer than 2 rows in the selected period");

    Metrics m;
    m.n = obs.size();
    m.mean_label = mean(obs);
    double rss = 0.0, tss = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        double e = obs[i] - preds[i];
        rss += e * e;
        abs_sum += std::fabs(e);
        tss += (obs[i] - m.mean_label) * (obs[i] - m.mean_label);
    }
    m.mae = abs_sum / static_cast<double>(m.n);
    m.rmse = std::sqrt(rss / static_cast<double>(m.n));
    m.r2 = tss > 0.0 ? 1.0 - rss / tss : 0.0;
    return m;
}

struct SearchSpace {
    std::size_t n_trees_lo = 100, n_trees_hi = 1000;
    int depth_lo = 3, depth_hi = 8;
    double lr_lo = 0.01, lr_hi = 0.3;  // log-uniform
    std::size_t min_leaf_lo = 5, min_leaf_hi = 50;
    // Subsampling is not searched by default; both fractions stay at 1 so
    // searched models keep the non-increasing training-loss guarantee.
    double row_subsample_lo = 1.0, row_subsample_hi = 1.0;
    double feature_subsample_lo = 1.0, feature_subsample_hi = 1.0;
};

struct Trial {
    Hyperparams hp;
    double test_r2 = 0.0;
    double train_r2 = 0.0;
};

struct SearchResult {
    Hyperparams best;
    double best_test_r2 = -std::numeric_limits<double>::infinity();
    std::vector<Trial> log;
};

inline Hyperparams draw_hyperparams(const SearchSpace& space, Rng& rng) {
    Hyperparams hp;
    hp.n_trees = space.n_trees_lo + rng.uniform_int(space.n_trees_hi - space.n_trees_lo + 1);
    hp.max_depth = space.depth_lo +
                   static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(space.depth_hi - space.depth_lo + 1)));
    hp.learning_rate = std::exp(rng.uniform(std::log(space.lr_lo), std::log(space.lr_hi)));
    hp.min_leaf = space.min_leaf_lo + rng.uniform_int(space.min_leaf_hi - space.min_leaf_lo + 1);
    hp.row_subsample = rng.uniform(space.row_subsample_lo, space.row_subsample_hi);
    hp.feature_subsample = rng.uniform(space.feature_subsample_lo, space.feature_subsample_hi);
    return hp;
}

// k seeded uniform draws from the space; best trial by test-set R2.
inline SearchResult random_search(const SearchSpace& space, std::size_t k_trials,
                                  const FeatureFrame& frame,
                                  const std::vector<std::string>& feature_names,
                                  const std::string& target, const BlockedSplit& split,
                                  std::uint64_t seed) {
    if (k_trials < 1) throw InvalidArgument("random_search: k_trials must be >= 1");
    std::vector<std::span<const double>> cols;
    for (const auto& name : feature_names) cols.push_back(frame.values(name));
    auto ys = frame.values(target);

    SearchResult result;
    for (std::size_t trial = 0; trial < k_trials; ++trial) {
        Rng rng(derive_seed(seed, "gbt/search", trial));
        Trial t;
        t.hp = draw_hyperparams(space, rng);
        GbtModel model =
            train(cols, ys, feature_names, t.hp, derive_seed(seed, "gbt/fit", trial), split.train_rows);
        t.test_r2 = evaluate(model, frame, target, split.test_rows).r2;
        t.train_r2 = evaluate(model, frame, target, split.train_rows).r2;
        if (t.test_r2 > result.best_test_r2) {
            result.best_test_r2 = t.test_r2;
            result.best = t.hp;
        }
        result.log.push_back(t);
    }
    return result;
}

// ---- serialization: pre-order node listing, 17-significant-digit numbers ----

inline std::string serialize_gbt(const GbtModel& model) {
    std::ostringstream out;
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "causalgrid-gbt v1\n";
    out << "features";
    for (const auto& f : model.feature_names) out << " " << f;
    out << "\n";
    out << "base " << num(model.base_score) << " eta " << num(model.learning_rate) << " trees "
        << model.trees.size() << " degenerate " << (model.degenerate_target ? 1 : 0) << "\n";
    for (const auto& tree : model.trees) {
        out << "tree " << tree.nodes.size() << "\n";
        auto emit = [&](auto&& self, int i) -> void {
            const TreeNode& n = tree.nodes[static_cast<std::size_t>(i)];
            if (n.leaf) {
                out << "  leaf " << num(n.value) << "\n";
            } else {
                out << "  split " << n.feature << " " << num(n.threshold) << "\n";
                self(self, n.left);
                self(self, n.right);
            }
        };
        emit(emit, 0);
    }
    return out.str();
}

inline GbtModel parse_gbt(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line, tok;
    if (!std::getline(in, line) || line != "causalgrid-gbt v1")
        throw FormatError("parse_gbt: bad header");
    GbtModel model;
    if (!std::getline(in, line)) throw FormatError("parse_gbt: missing feature list");
    {
        std::istringstream ls(line);
        ls >> tok;
        if (tok != "features") throw FormatError("parse_gbt: missing feature list");
        while (ls >> tok) model.feature_names.push_back(tok);
    }
    std::size_t n_trees = 0;
    int degenerate = 0;
    {
        std::string kb, ke, kt, kd;
        if (!(in >> kb >> model.base_score >> ke >> model.learning_rate >> kt >> n_trees >> kd >>
              degenerate) ||
            kb != "base" || ke != "eta" || kt != "trees" || kd != "degenerate")
            throw FormatError("parse_gbt: bad model line");
    }
    model.degenerate_target = degenerate != 0;
    for (std::size_t t = 0; t < n_trees; ++t) {
        std::size_t n_nodes = 0;
        if (!(in >> tok >> n_nodes) || tok != "tree") throw FormatError("parse_gbt: expected tree");
        RegressionTree tree;
        auto read = [&](auto&& self) -> int {
            std::string kind;
            if (!(in >> kind)) throw FormatError("parse_gbt: truncated tree");
            int idx = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({});
            if (kind == "leaf") {
                in >> tree.nodes[static_cast<std::size_t>(idx)].value;
            } else if (kind == "split") {
                TreeNode n;
                n.leaf = false;
                in >> n.feature >> n.threshold;
                tree.nodes[static_cast<std::size_t>(idx)] = n;
                int l = self(self);
                int r = self(self);
                tree.nodes[static_cast<std::size_t>(idx)].left = l;
                tree.nodes[static_cast<std::size_t>(idx)].right = r;
            } else {
                throw FormatError("parse_gbt: unexpected node kind: " + kind);
            }
            return idx;
        };
        read(read);
        if (tree.nodes.size() != n_nodes) throw FormatError("parse_gbt: node count mismatch");
        model.trees.push_back(std::move(tree));
    }
    model.hp.n_trees = model.trees.size();
    model.hp.learning_rate = model.learning_rate;
    return model;
}

}  // namespace causalgrid
