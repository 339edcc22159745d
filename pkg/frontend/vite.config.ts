/// <reference types="vitest/config" />
import { defineConfig } from "vite";

// the session server mounts dist/ under /ui/ and serves index.html at /,
// so built asset URLs must be absolute /ui/ paths
export default defineConfig({
  base: "/ui/",
  build: {
    outDir: "dist",
    emptyOutDir: true,
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
