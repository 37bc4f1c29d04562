#pragma once

#include "gpo/bandit.hpp"
#include "gpo/checks.hpp"
#include "gpo/config.hpp"
#include "gpo/errors.hpp"
#include "gpo/gaussian.hpp"
#include "gpo/goodhart.hpp"
#include "gpo/io.hpp"
#include "gpo/loss.hpp"
#include "gpo/numeric.hpp"
#include "gpo/parallel.hpp"
#include "gpo/policy.hpp"
#include "gpo/reward.hpp"
#include "gpo/rng.hpp"
#include "gpo/trainer.hpp"
