#pragma once

#include "cdkt/cascade.hpp"
#include "cdkt/evaluation.hpp"
#include "cdkt/inference.hpp"
#include "cdkt/latent_model.hpp"
#include "cdkt/objective.hpp"
#include "cdkt/rng.hpp"
#include "cdkt/synthetic.hpp"
#include "cdkt/trainer.hpp"
