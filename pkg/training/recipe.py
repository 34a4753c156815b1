"""Effective settings of a run with some recipe ingredients switched off."""

from config.models import AugmentPolicy, ModelConfig, RecipeSwitches, TrainingConfig


def model_for_recipe(model: ModelConfig, recipe: RecipeSwitches) -> ModelConfig:
    """
    Architecture and regularizer rates with disabled ingredients removed.

    `input_dim` is the Δ/ΔΔ-stacked dimension; without deltas the network
    sees the static third of it.
    """
    updates: dict[str, object] = {}
    if not recipe.dropout:
        updates.update(encoder_dropout=0.0, embed_dropout=0.0, output_dropout=0.0)
    if not recipe.dropconnect:
        updates.update(encoder_dropconnect=0.0, weight_dropout=0.0)
    if not recipe.zoneout:
        updates.update(zoneout_cell=0.0, zoneout_output=0.0)
    if not recipe.residual:
        updates["residual"] = False
    if not recipe.deltas:
        if model.input_dim % 3:
            raise ValueError(f"input_dim {model.input_dim} is not a Δ/ΔΔ stack (multiple of 3)")
        updates["input_dim"] = model.input_dim // 3
    return model.model_copy(update=updates)


def augment_for_recipe(policy: AugmentPolicy, recipe: RecipeSwitches) -> AugmentPolicy:
    updates: dict[str, object] = {}
    if not recipe.specaugment:
        updates.update(n_freq_masks=0, n_time_masks=0)
    if not recipe.tempo_perturbation:
        updates["speed_tempo_prob"] = 0.0
    if not recipe.sequence_noise:
        updates["seqnoise_prob"] = 0.0
    return policy.model_copy(update=updates)


def weight_decay_for_recipe(training: TrainingConfig, recipe: RecipeSwitches) -> float:
    return training.weight_decay if recipe.weight_decay else 0.0
