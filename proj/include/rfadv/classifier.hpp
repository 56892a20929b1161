#pragma once

#include <string>
#include <vector>

#include "rfadv/autodiff.hpp"
#include "rfadv/iq.hpp"

namespace rfadv::cls {

// Small CNN over raw I/Q frames, laid out as a [1, 2, 128] image (row 0 = I,
// row 1 = Q). conv1 (1x3, same) -> relu -> dropout -> conv2 (2x3, height
// valid / width same) -> relu -> dropout -> dense -> relu -> dropout ->
// dense logits. extra_dense_units > 0 inserts one more hidden dense layer
// (used for architecture-mismatch experiments).
struct ModelConfig {
    int n_classes = iq::kNumSchemes;
    int conv1_filters = 64;
    int conv2_filters = 16;
    int dense_units = 128;
    int extra_dense_units = 0;
    double dropout = 0.5;
};

struct TrainConfig {
    int epochs = 8;
    int batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

struct EpochStats {
    double mean_loss = 0.0;      // mean per-sample training loss
    double train_accuracy = 0.0; // tallied on the training forward passes
};

class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    std::size_t parameter_count() const;

    // Trains on ds.train_idx; a non-finite batch loss aborts with a training
    // error naming the epoch. Returns one entry per epoch.
    std::vector<EpochStats> train(const iq::Dataset& ds, const TrainConfig& tc);

    // Evaluation-mode forward passes (dropout inactive).
    nn::Tensor logits(const std::vector<const iq::IQFrame*>& frames) const;
    std::vector<double> probs(const iq::IQFrame& frame) const;
    int predict(const iq::IQFrame& frame) const;

    // Gradient of the true-class cross entropy with respect to the input,
    // packed as g_j = dL/dI_j + i * dL/dQ_j.
    iq::IQFrame input_gradient(const iq::IQFrame& frame, int label) const;
    // One frame, every class label at once (single batched backward pass);
    // result[c] is the gradient of the loss toward class c.
    std::vector<iq::IQFrame> input_gradients_all_classes(const iq::IQFrame& frame) const;

    double accuracy(const std::vector<const iq::DatasetRecord*>& records) const;

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    struct Forward {
        nn::Graph::Id x;
        nn::Graph::Id logits;
        std::vector<nn::Graph::Id> param_ids;
    };
    Forward forward(nn::Graph& g, nn::Tensor batch, Rng* dropout_rng) const;

    ModelConfig cfg_;
    std::vector<std::pair<std::string, nn::Tensor>> params_; // fixed order
};

// Packs frames into a [N, 1, 2, kFrameLen] batch tensor.
nn::Tensor pack_frames(const std::vector<const iq::IQFrame*>& frames);

} // namespace rfadv::cls
