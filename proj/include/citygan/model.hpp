#pragma once

// Umbrella header for the network definitions.

#include "citygan/broadcast.hpp"
#include "citygan/discriminator.hpp"
#include "citygan/generator.hpp"
#include "citygan/network_config.hpp"
#include "citygan/optim.hpp"
