// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hmt/batch.hpp"
#include "hmt/model.hpp"

namespace hmt {
inline namespace HMT_NN_NAMESPACE {

/// Restoration loss: for each sentence, the mean negative log-probability of
/// the original tokens at its masked positions, averaged over sentences.
Tensor mlm_loss(Graph& g, const Model& model, const MaskedBatch& batch);

/// Translation loss with teacher forcing: per-sentence mean token NLL over
/// the |k_i| predicted tokens (including EOS), averaged over sentences.
Tensor translation_loss(Graph& g, const Model& model, const PairedBatch& batch);

}  // namespace HMT_NN_NAMESPACE
}  // namespace hmt
