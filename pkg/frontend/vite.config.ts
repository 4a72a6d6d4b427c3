/// <reference types="vitest/config" />
import { defineConfig } from "vite";

export default defineConfig({
  // relative asset paths so the bundle works under the service's static mount
  base: "./",
  server: {
    proxy: {
      "/api": "http://127.0.0.1:8787",
      "/healthz": "http://127.0.0.1:8787",
    },
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
