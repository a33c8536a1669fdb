#ifndef WATCHDOG_H
#define WATCHDOG_H

#include <stdbool.h>
#include <stdint.h>

#define WDG_DEFAULT_TIMEOUT_MS 500u

typedef struct {
    uint32_t timeout_ms;
    uint32_t elapsed_ms;
    bool expired;
} watchdog_t;

void wdg_start(watchdog_t *w, uint32_t timeout_ms);
void wdg_kick(watchdog_t *w);
bool wdg_tick(watchdog_t *w, uint32_t delta_ms);

#endif
